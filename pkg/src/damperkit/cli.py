"""Command line: ``damperkit {analyze,simulate,case-study,table1,examples}``.

Exit status is 0 on success, 1 when a simulated packet leaves its bounds
or a reference value is missed, and 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .analysis import analyze_flow, check_references
from .bounds import simplified_sync_threshold
from .clocks import preset
from .config import bundled_config_path, load, paths_config
from .errors import DamperkitError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("damperkit")


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _render(rows: list[dict], precision_ns: bool, as_json: bool) -> list[dict]:
    """Convert duration columns (seconds, keys ending in _us or _ns) for output.

    CSV cells are strings (µs with three decimals or integer ns); JSON keeps
    full-precision numbers in the column's unit.
    """
    out = []
    for row in rows:
        r = {}
        for key, val in row.items():
            unit = key[-3:] if key.endswith(("_us", "_ns")) else None
            if unit is None or not isinstance(val, (int, float)) or isinstance(val, bool):
                r[key] = val
                continue
            base = key[:-3]
            if precision_ns:
                scaled = val * 1e9
                r[base + "_ns"] = scaled if as_json else ("inf" if math.isinf(scaled) else str(round(scaled)))
            else:
                scaled = val * (1e6 if unit == "_us" else 1e9)
                r[key] = scaled if as_json else f"{scaled:.3f}"
        out.append(r)
    return out


def _emit(rows: list[dict], args, stream=None) -> None:
    as_json = args.format == "json"
    rendered = _render(rows, args.precision_ns, as_json)
    if as_json:
        text = json.dumps(rendered, indent=2) + "\n"
    else:
        buf = io.StringIO()
        if rendered:
            w = csv.DictWriter(buf, fieldnames=list(rendered[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rendered)
        text = buf.getvalue()
    _write(text, args.out, stream)


def _write(text: str, path: str | None, stream=None) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        (stream or sys.stdout).write(text)


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------


def _bounds_row(flow_id: str, block_id: str, res) -> dict:
    bd = res.breakdown
    return {
        "flow_id": flow_id,
        "block_id": block_id,
        "d_upper_us": res.d_upper,
        "d_lower_us": res.d_lower,
        "jitter_us": res.jitter,
        "psi_upper_ns": res.psi_upper,
        "psi_lower_ns": res.psi_lower,
        "basic_jitter_us": bd.basic,
        "error_term_ns": bd.error_term,
        "clock_term_ns": bd.clock_term,
        "fifo_term_ns": bd.fifo_term,
    }


def cmd_analyze(args) -> int:
    cfg = paths_config(load(args.config))
    rows = []
    for flow in cfg.flows:
        fa = analyze_flow(flow)
        if args.mode in ("per_block", "both"):
            rows += [_bounds_row(flow.id, b.label, b) for b in fa.blocks]
            rows.append(_bounds_row(flow.id, "e2e", fa.e2e))
        if args.mode in ("te", "both") and fa.te is not None:
            rows.append(_bounds_row(flow.id, "te", fa.te))
    _emit(rows, args)
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _source_from(sim: dict, flow):
    from .config import curve_from, duration
    from .curves import LeakyBucket
    from .sim import SourceSpec

    src = sim.get("source", {})
    alpha = curve_from(src["alpha"]) if "alpha" in src else flow.alpha_packets
    kind = src.get("kind", "greedy" if alpha is not None else "periodic")
    if kind in ("greedy", "back_to_back", "bounded_random") and alpha is None:
        alpha = LeakyBucket(1 / duration(src, "period", 125e-6), 1, unit="packets")
    return SourceSpec(kind, src.get("packets", 1000), duration(src, "period", 125e-6),
                      duration(src, "spacing", 0.0), alpha)


def _sim_config(cfg, args):
    from .config import duration
    from .sim import SimConfig

    sim = dict(cfg.simulation)
    flow = cfg.flow(args.flow or sim.get("flow"))
    if not 0 <= args.block < len(flow.blocks):
        raise DamperkitError(f"flow {flow.id} has {len(flow.blocks)} blocks; --block {args.block} is out of range")
    modes = sim.get("clock_modes", "random")
    return flow, SimConfig(
        flow.blocks[args.block],
        _source_from(sim, flow),
        clock_modes=modes if isinstance(modes, str) else tuple(modes),
        clock_segment=duration(sim, "clock_segment", 50e-6),
        jcs_policy=sim.get("jcs_policy", "uniform"),
        jcs_low_fraction=sim.get("jcs_low_fraction", 0.2),
        header_error=sim.get("header_error", "random"),
        release_policy=sim.get("release_policy", "random"),
        grid_phase=sim.get("grid_phase", "random"),
        prefix_jitter=duration(sim, "prefix_jitter"),
        seed=args.seed if args.seed is not None else sim.get("seed", 0),
        trials=args.trials if args.trials is not None else sim.get("trials", 1),
    )


def _report_violations(report) -> int:
    if not report.violations:
        return EXIT_OK
    ids = sorted({v["packet_id"] for v in report.violations if v["kind"] != "jitter"})
    kinds = sorted({v["kind"] for v in report.violations})
    print(f"bound violation ({', '.join(kinds)}): packet ids {ids[:50]}{' ...' if len(ids) > 50 else ''}",
          file=sys.stderr)
    return EXIT_FAIL


def cmd_simulate(args) -> int:
    from .sim import rcsp_backtoback_experiment, rgcq_reorder_experiment, simulate_block, tightness_trace

    scenario = args.scenario
    trials = args.trials
    seed = args.seed if args.seed is not None else 0
    if scenario == "rgcq-reorder":
        freq = rgcq_reorder_experiment(args.tau_us * 1e-6, args.e_tran_ns * 1e-9, args.clock_pair,
                                       trials or 10_000, seed=seed)
        rows = [{"scenario": scenario, "tau_us": args.tau_us * 1e-6, "e_tran_bound_ns": args.e_tran_ns * 1e-9,
                 "clock_pair": args.clock_pair, "trials": trials or 10_000, "reorder_frequency": freq}]
        _emit(rows, args)
        return EXIT_OK
    if scenario == "rcsp-reorder":
        rows = []
        for ratio in (float(x) for x in args.ratios.split(",")):
            dl = args.delta_l_us * 1e-6
            res = rcsp_backtoback_experiment(ratio * dl, dl, trials or 10_000, seed=seed)
            rows.append({"scenario": scenario, "tau_over_delta_l": ratio, "delta_l_us": dl,
                         "p_backtoback": res["p_backtoback"], "expected_backtoback": round(1 - ratio, 12),
                         "p_reorder": res["p_reorder"]})
        _emit(rows, args)
        return EXIT_OK

    cfg = paths_config(load(args.config))
    flow, sc = _sim_config(cfg, args)
    if scenario.startswith("tightness-"):
        report = tightness_trace(sc.block, scenario[len("tightness-"):].replace("-", "_"))
    else:
        report = simulate_block(sc, jobs=args.jobs)
    if args.out:
        Path(args.out).write_text(report.to_csv(), encoding="utf-8")
        print(report.summary_json())
    else:
        sys.stdout.write(report.to_csv())
    return _report_violations(report)


# ---------------------------------------------------------------------------
# case-study
# ---------------------------------------------------------------------------


def _parse_bool_choice(text: str) -> list[bool]:
    t = text.lower()
    if t in ("true", "yes", "1", "fifo"):
        return [True]
    if t in ("false", "no", "0", "non-fifo", "nonfifo"):
        return [False]
    if t == "both":
        return [True, False]
    raise argparse.ArgumentTypeError(f"expected true, false or both, got {text!r}")


def cmd_case_study(args) -> int:
    from .tfa import DEPLOYMENTS, deployment_report, network_from_config

    net = network_from_config(load(args.network))
    deployments = DEPLOYMENTS if args.deployment == "all" else tuple(args.deployment.split(","))
    for d in deployments:
        if d not in DEPLOYMENTS:
            raise DamperkitError(f"unknown deployment {d!r}; choose from {', '.join(DEPLOYMENTS)} or all")
    rows = deployment_report(net, deployments, args.fabric_fifo)
    out = []
    for r in rows:
        out.append({
            "flow_id": r["flow_id"], "hops": r["hops"], "deployment": r["deployment"],
            "fabric_fifo": r["fabric_fifo"], "d_upper_us": r["d_upper"], "d_lower_us": r["d_lower"],
            "jitter_us": r["jitter"], "fifo_term_us": r["fifo_term"], "theta_sum_us": r["theta_sum"],
            "converged": r["converged"], "iterations": r["iterations"],
        })
    _emit(out, args)
    if not all(r["converged"] for r in rows):
        print("fixed point did not converge for some deployment", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


# ---------------------------------------------------------------------------
# table1
# ---------------------------------------------------------------------------

TABLE1_REFERENCE = {"white_rabbit": 3.96e-3, "gptp": 39.96e-3, "ntp": 3.99}


def table1_rows() -> list[dict]:
    """Smallest per-block sum of JCS delay bounds for which synchronization
    tightens the bounds, per synchronization method."""
    rows = []
    for name in ("white_rabbit", "gptp", "ntp"):
        clock = preset(name)
        value = simplified_sync_threshold(clock)
        ref = TABLE1_REFERENCE[name]
        ok = f"{value:.3g}" == f"{ref:.3g}"
        rows.append({"method": name, "omega_us": clock.omega, "threshold_ms": value * 1e3,
                     "reference_ms": ref * 1e3, "status": "PASS" if ok else "UNRECONCILED"})
    return rows


def cmd_table1(args) -> int:
    rows = table1_rows()
    if args.format == "json":
        text = json.dumps([{**r, "omega_us": r["omega_us"] * 1e6} for r in rows], indent=2) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "omega_us", "threshold_ms", "reference_ms", "status"])
        for r in rows:
            w.writerow([r["method"], f"{r['omega_us'] * 1e6:g}", f"{r['threshold_ms']:.10g}",
                        f"{r['reference_ms']:g}", r["status"]])
        text = buf.getvalue()
    _write(text, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# examples
# ---------------------------------------------------------------------------


def _fmt_check(c, precision_ns: bool) -> str:
    def show(x):
        return f"{round(x * 1e9)} ns" if precision_ns else f"{x * 1e6:.4f} us"
    flag = "PASS" if c.passed else "FAIL"
    return (f"{flag}  {c.quantity:<20} computed {show(c.computed):>16}  reference {show(c.reference):>16}  "
            f"diff {(c.error) * 1e9:+.3f} ns  allowed +/-{c.allowed * 1e9:.3f} ns")


def cmd_examples(args) -> int:
    which = ["1", "2", "3"] if args.which == "all" else [args.which]
    failed = 0
    records = []
    for w in which:
        path = bundled_config_path(f"ex{w}")
        cfg = paths_config(load(path))
        checks = check_references(cfg)
        if args.format == "json":
            records += [{"example": int(w), "quantity": c.quantity, "computed_s": c.computed,
                         "reference_s": c.reference, "allowed_s": c.allowed, "passed": c.passed} for c in checks]
        else:
            print(f"Example {w}")
            for c in checks:
                print("  " + _fmt_check(c, args.precision_ns))
        failed += sum(not c.passed for c in checks)
    if args.format == "json":
        _write(json.dumps(records, indent=2) + "\n", args.out)
    elif failed:
        print(f"{failed} reference value(s) missed")
    return EXIT_FAIL if failed else EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--out", help="output file (default: standard output)")
    common.add_argument("--precision-ns", action="store_true", help="report durations as integer nanoseconds")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="damperkit", description="Delay and jitter bounds for networks with dampers.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", parents=[common], help="per-block and end-to-end bounds of a paths config")
    a.add_argument("--config", required=True, help="config file or bundled name (ex1, ex2, ex3)")
    a.add_argument("--mode", choices=("per_block", "te", "both"), default="both")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", parents=[common], help="packet-level simulation of one block")
    s.add_argument("--config", help="paths config (needed for random and tightness scenarios)")
    s.add_argument("--scenario", default="random",
                   choices=("random", "tightness-upper-drift", "tightness-upper-sync", "tightness-lower-drift",
                            "tightness-lower-sync", "rgcq-reorder", "rcsp-reorder"))
    s.add_argument("--flow")
    s.add_argument("--block", type=int, default=0, help="block index along the flow (default 0)")
    s.add_argument("--trials", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--tau-us", type=float, default=1.0, help="rgcq-reorder: transmission time")
    s.add_argument("--e-tran-ns", type=float, default=0.0, help="rgcq-reorder: transmission-time error bound")
    s.add_argument("--clock-pair", default="symmetric",
                   choices=("symmetric", "downstream_slower", "downstream_faster"))
    s.add_argument("--ratios", default="0,0.2,0.5,0.9", help="rcsp-reorder: packet spacing over delta_l")
    s.add_argument("--delta-l-us", type=float, default=1.0)
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("case-study", parents=[common], help="fixed-point TFA over a network config")
    c.add_argument("network", help="network config file or bundled name (orion)")
    c.add_argument("--deployment", default="all", help="none, rcsp, rgcq_te, fopleq, hol, a comma list, or all")
    c.add_argument("--fabric-fifo", type=_parse_bool_choice, default=[True], help="true, false or both")
    c.set_defaults(func=cmd_case_study)

    t = sub.add_parser("table1", parents=[common], help="synchronization thresholds per method")
    t.set_defaults(func=cmd_table1)

    e = sub.add_parser("examples", parents=[common], help="recompute the bundled examples against reference values")
    e.add_argument("--which", choices=("1", "2", "3", "all"), default="all")
    e.set_defaults(func=cmd_examples)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "simulate" and args.scenario in ("random",) or (
            args.command == "simulate" and args.scenario.startswith("tightness-")):
        if not args.config:
            parser.error(f"--config is required for scenario {args.scenario}")
    try:
        return args.func(args)
    except DamperkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
