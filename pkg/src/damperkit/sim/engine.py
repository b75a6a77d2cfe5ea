"""Packet-level simulation of one block.

Packets are processed stage by stage: every element sees the packets in
the order they reach it (TAI arrival time, then packet id).  TAI instants
are integer picoseconds; readings of local clocks are floats in local
picoseconds.  Each stage rounds its TAI departure to the nearest
picosecond, so simulated delays may exceed the exact values by half a
picosecond per stage; :func:`check_bounds` allows that much slack.
"""

from __future__ import annotations

import csv
import io
import json
import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..bounds import BdsSpec, Block, BoundsResult, JcsSpec, block_bounds
from ..clocks import ClockTrajectory, sample_trajectory
from ..dampers import DamperSpec, Rounding, Variant, quantize, rounding_error_range, sample_header_error
from ..errors import ConfigError
from .sources import PS, SourceSpec, generate

DELAY_POLICIES = ("uniform", "extremes", "max", "scripted")
RELEASE_POLICIES = ("random", "latest", "earliest")
HEADER_ERROR_MODES = ("random", "plus", "minus", "zero")
GRID_PHASES = ("random", "zero")


@dataclass(frozen=True)
class SimConfig:
    """Everything one simulation run needs.

    ``clock_modes`` is either one trajectory mode for every clock or a
    sequence with one mode per element followed by one for the damper.
    Elements that share a ``clock_id`` share a trajectory, and the first
    element's mode is used for it.

    With ``jcs_policy="scripted"``, ``scripted_delays[i][n]`` is the local
    delay (seconds) of packet ``n`` in element ``i``.
    """

    block: Block
    source: SourceSpec = field(default_factory=SourceSpec)
    clock_modes: str | tuple[str, ...] = "random"
    clock_segment: float = 50e-6
    jcs_policy: str = "uniform"
    jcs_low_fraction: float = 0.2
    scripted_delays: tuple[tuple[float, ...], ...] | None = None
    header_error: str = "random"
    release_policy: str = "random"
    grid_phase: str = "random"
    prefix_jitter: float | None = None
    seed: int = 0
    trials: int = 1

    def __post_init__(self) -> None:
        if self.jcs_policy not in DELAY_POLICIES:
            raise ConfigError(f"unknown JCS delay policy {self.jcs_policy!r}; choose from {DELAY_POLICIES}")
        if self.release_policy not in RELEASE_POLICIES:
            raise ConfigError(f"unknown release policy {self.release_policy!r}")
        if self.header_error not in HEADER_ERROR_MODES:
            raise ConfigError(f"unknown header error mode {self.header_error!r}")
        if self.grid_phase not in GRID_PHASES:
            raise ConfigError(f"unknown grid phase {self.grid_phase!r}")
        if not 0 <= self.jcs_low_fraction <= 1:
            raise ConfigError("jcs_low_fraction must lie in [0, 1]")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not isinstance(self.clock_modes, str):
            modes = tuple(self.clock_modes)
            object.__setattr__(self, "clock_modes", modes)
            if len(modes) != len(self.block.elements) + 1:
                raise ConfigError("clock_modes needs one mode per element plus one for the damper")
        if self.jcs_policy == "scripted":
            sd = self.scripted_delays
            if sd is None or len(sd) != len(self.block.elements):
                raise ConfigError("scripted policy needs one delay list per element")
            for elem, delays in zip(self.block.elements, sd):
                if len(delays) != self.source.packets:
                    raise ConfigError("scripted delays need one value per packet")
                if isinstance(elem, JcsSpec) and any(not elem.delta_min <= d <= elem.delta for d in delays):
                    raise ConfigError("scripted JCS delay outside [delta_min, delta]")
                if isinstance(elem, BdsSpec) and any(not elem.pi_lower <= d <= elem.pi_upper for d in delays):
                    raise ConfigError("scripted BDS delay outside [pi_lower, pi_upper]")
        if self.block.damper.variant is Variant.HEAD_OF_LINE and self.block.damper.phi_max > 0 \
                and self.source.alpha is None:
            raise ConfigError("a head-of-line damper needs a source arrival curve")

    def mode_for(self, index: int) -> str:
        """Trajectory mode of element ``index`` (``-1`` for the damper)."""
        if isinstance(self.clock_modes, str):
            return self.clock_modes
        return self.clock_modes[index]


@dataclass
class SimReport:
    """Per-packet results of one or more trials.

    Packet ids are unique across trials: trial ``k`` numbers its packets
    from ``k * packets``.  ``eligibility_local`` holds the eligibility time
    each packet was assigned by the damper, on the damper's clock (local
    ps), before any wait for a packet that arrived after that instant.
    """

    packet_id: np.ndarray
    trial: np.ndarray
    entry_tai_ps: np.ndarray
    exit_tai_ps: np.ndarray
    reordered: np.ndarray
    eligibility_local: np.ndarray
    reorder_events: list[tuple[int, int]] = field(default_factory=list)
    violations: list[dict] = field(default_factory=list)
    bounds: BoundsResult | None = None
    slack_ps: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def delay_ps(self) -> np.ndarray:
        return self.exit_tai_ps - self.entry_tai_ps

    @property
    def count(self) -> int:
        return len(self.packet_id)

    @property
    def min_delay_ps(self) -> int | None:
        return int(self.delay_ps.min()) if self.count else None

    @property
    def max_delay_ps(self) -> int | None:
        return int(self.delay_ps.max()) if self.count else None

    @property
    def reorder_frequency(self) -> float:
        return float(self.reordered.mean()) if self.count else 0.0

    def frequencies(self) -> dict:
        return {"reordered_packets": self.reorder_frequency, "packets": self.count}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["packet_id", "entry_tai_ps", "exit_tai_ps", "delay_ps", "reordered_flag"])
        for row in zip(self.packet_id.tolist(), self.entry_tai_ps.tolist(), self.exit_tai_ps.tolist(),
                       self.delay_ps.tolist(), self.reordered.astype(int).tolist()):
            w.writerow(row)
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "packets": self.count,
            "min_delay_ps": self.min_delay_ps,
            "max_delay_ps": self.max_delay_ps,
            "reorder_frequency": self.reorder_frequency,
            "reorder_events": len(self.reorder_events),
            "violations": self.violations,
            "slack_ps": self.slack_ps,
            "bounds": None if self.bounds is None else self.bounds.as_dict(),
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


_MASK = (1 << 64) - 1


def trial_seed(seed: int, trial: int, salt: int = 0) -> int:
    """Independent, reproducible seed for one trial (and one stream within it).

    A splitmix64-style mix; ``random.Random`` spreads the result further.
    """
    z = (seed * 0x9E3779B97F4A7C15 + trial * 0xBF58476D1CE4E5B9 + salt * 0x94D049BB133111EB) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _reorder_flags(exit_ps: np.ndarray) -> np.ndarray:
    """Flag packet ``n`` when an earlier-entered packet leaves strictly after it."""
    if len(exit_ps) == 0:
        return np.zeros(0, dtype=bool)
    prior_max = np.maximum.accumulate(exit_ps)
    flags = np.zeros(len(exit_ps), dtype=bool)
    flags[1:] = exit_ps[1:] < prior_max[:-1]
    return flags


class _Run:
    """State of a single trial."""

    def __init__(self, cfg: SimConfig, trial: int):
        self.cfg = cfg
        self.block = cfg.block
        self.rng = random.Random(trial_seed(cfg.seed, trial, 1))
        self.trial = trial
        self.clock_ps = self.block.clock.scaled(PS)
        self._clocks: dict[str, ClockTrajectory] = {}
        self._clock_salt = 100

    def clock(self, key: str, mode: str) -> ClockTrajectory:
        if key not in self._clocks:
            self._clock_salt += 1
            self._clocks[key] = sample_trajectory(
                self.clock_ps, trial_seed(self.cfg.seed, self.trial, self._clock_salt), mode,
                segment=self.cfg.clock_segment * PS)
        return self._clocks[key]

    # -- per-element delay draws ------------------------------------------
    def jcs_delay(self, i: int, elem: JcsSpec, n: int) -> float:
        hi = elem.delta * PS
        lo = max(elem.delta_min, self.cfg.jcs_low_fraction * elem.delta) * PS
        policy = self.cfg.jcs_policy
        if policy == "uniform":
            return self.rng.uniform(lo, hi)
        if policy == "max":
            return hi
        if policy == "extremes":
            return hi if self.rng.random() < 0.5 else elem.delta_min * PS
        return self.cfg.scripted_delays[i][n] * PS

    def bds_window(self, elem: BdsSpec) -> tuple[float, float]:
        lo, hi = elem.pi_lower * PS, elem.pi_upper * PS
        width = min(elem.nu * PS, hi - lo)
        base = self.rng.uniform(lo, hi - width)
        return base, base + width

    # -- stages -----------------------------------------------------------
    def run(self) -> dict:
        cfg = self.cfg
        entry = generate(cfg.source, self.rng)
        n = len(entry)
        t = entry.tolist()
        header = [0.0] * n
        for i, elem in enumerate(self.block.elements):
            order = sorted(range(n), key=lambda p: (t[p], p))
            if isinstance(elem, JcsSpec):
                self._jcs_stage(i, elem, order, t, header)
            else:
                self._bds_stage(i, elem, order, t)
        order = sorted(range(n), key=lambda p: (t[p], p))
        exit_ps, elig = self._damper_stage(order, t, header)
        ids = np.arange(n, dtype=np.int64) + self.trial * cfg.source.packets
        exit_arr = np.asarray(exit_ps, dtype=np.int64)
        return {
            "packet_id": ids,
            "trial": np.full(n, self.trial, dtype=np.int64),
            "entry": entry,
            "exit": exit_arr,
            "elig": np.asarray(elig, dtype=float),
        }

    def _jcs_stage(self, i, elem: JcsSpec, order, t, header) -> None:
        clk = self.clock(elem.clock_id or f"element-{i}", self.cfg.mode_for(i))
        eps = elem.epsilon * PS
        delta = elem.delta * PS
        last_local = -math.inf
        for p in order:
            arrive_local = clk.local(t[p])
            leave_local = arrive_local + self.jcs_delay(i, elem, p)
            if elem.fifo:
                # The previous packet left no later than arrive + delta, so
                # waiting for it keeps this packet within its bound.
                leave_local = max(leave_local, last_local)
                last_local = leave_local
            measured = leave_local - arrive_local
            t[p] = t[p] + round(clk.tai_elapsed(t[p], measured))
            err = sample_header_error(eps, self.rng, self.cfg.header_error).total
            header[p] += (delta - measured) + err

    def _bds_stage(self, i, elem: BdsSpec, order, t) -> None:
        lo, hi = self.bds_window(elem)
        last = None
        for p in order:
            if self.cfg.jcs_policy == "scripted":
                d = self.cfg.scripted_delays[i][p] * PS
            elif self.cfg.jcs_policy == "max":
                d = hi
            else:
                d = self.rng.uniform(lo, hi)
            out = t[p] + math.floor(d)
            if elem.fifo and last is not None and out < last:
                out = last
            t[p] = out
            last = out

    def _tentative(self, spec: DamperSpec, e_tilde: float, phase: float) -> float:
        policy = self.cfg.release_policy
        if spec.variant is Variant.IDEAL:
            return e_tilde
        if spec.rounding is not Rounding.NONE:
            lo, hi = rounding_error_range(self._spec_ps)
            u = hi if policy == "latest" else lo if policy == "earliest" else self.rng.uniform(lo, hi)
            return quantize(e_tilde + u, self._spec_ps, phase)
        if policy == "latest":
            return e_tilde + spec.delta_u * PS
        if policy == "earliest":
            return e_tilde - spec.delta_l * PS
        return self.rng.uniform(e_tilde - spec.delta_l * PS, e_tilde + spec.delta_u * PS)

    def _damper_stage(self, order, t, header):
        spec = self.block.damper
        self._spec_ps = DamperSpec(
            spec.variant, spec.delta_l * PS, spec.delta_u * PS,
            None if spec.granularity is None else spec.granularity * PS,
            spec.phi_min * PS, spec.phi_max * PS, spec.header_mode, spec.rounding)
        phase = 0.0
        if spec.granularity is not None and self.cfg.grid_phase == "random":
            phase = self.rng.uniform(0, spec.granularity * PS)
        clk = self.clock("__damper__", self.cfg.mode_for(-1))
        n = len(t)
        exit_ps = [0] * n
        elig = [0.0] * n
        last_local = -math.inf
        last_tai = None
        phi_lo = math.ceil(spec.phi_min * PS)
        phi_hi = math.floor(spec.phi_max * PS)
        for p in order:
            q = clk.local(t[p])
            e = self._tentative(spec, q + header[p], phase)
            elig[p] = e
            # A damper cannot release a packet before it has arrived.
            e = max(e, q)
            if spec.variant is Variant.RESEQUENCING:
                e = max(e, last_local)
                last_local = e
            release = t[p] + round(clk.tai_elapsed(t[p], e - q))
            if spec.variant is Variant.HEAD_OF_LINE:
                start = release if last_tai is None else max(release, last_tai)
                release = start + (self.rng.randint(phi_lo, phi_hi) if phi_hi > phi_lo else phi_lo)
                last_tai = release
            exit_ps[p] = release
        return exit_ps, elig


def _run_trial(args) -> dict:
    cfg, trial = args
    return _Run(cfg, trial).run()


def default_bounds(cfg: SimConfig) -> BoundsResult:
    """Bounds of the theorem matching the configured block."""
    return block_bounds(cfg.block, cfg.source.alpha, cfg.prefix_jitter)


def simulate_block(cfg: SimConfig, jobs: int = 1, bounds: BoundsResult | None = None,
                   check: bool = True) -> SimReport:
    """Run ``cfg.trials`` independent trials and check them against the bounds.

    Trials are merged in trial order, so the report does not depend on
    ``jobs``.
    """
    args = [(cfg, k) for k in range(cfg.trials)]
    if jobs > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_run_trial, args))
    else:
        parts = [_run_trial(a) for a in args]
    reordered, events = [], []
    for part in parts:
        flags = _reorder_flags(part["exit"])
        reordered.append(flags)
        if flags.any():
            prior = np.maximum.accumulate(part["exit"])
            for idx in np.flatnonzero(flags).tolist():
                culprit = int(np.flatnonzero(part["exit"][:idx] == prior[idx - 1])[0])
                events.append((int(part["packet_id"][culprit]), int(part["packet_id"][idx])))

    def cat(key, dtype):
        return np.concatenate([p[key] for p in parts]).astype(dtype) if parts else np.zeros(0, dtype)

    report = SimReport(
        packet_id=cat("packet_id", np.int64),
        trial=cat("trial", np.int64),
        entry_tai_ps=cat("entry", np.int64),
        exit_tai_ps=cat("exit", np.int64),
        reordered=np.concatenate(reordered) if reordered else np.zeros(0, bool),
        eligibility_local=cat("elig", float),
        reorder_events=events,
        slack_ps=stage_slack(cfg.block),
    )
    if check:
        report.bounds = bounds if bounds is not None else default_bounds(cfg)
        report.violations = check_bounds(report, report.bounds)
    return report


def stage_slack(block: Block) -> float:
    """Rounding allowance: one picosecond per element plus one for the damper."""
    return float(len(block.elements) + 1)


def check_bounds(report: SimReport, bounds: BoundsResult, slack_ps: float | None = None) -> list[dict]:
    """Packets whose delay leaves ``[d_lower, d_upper]``, plus a jitter entry.

    Each violation is a dict with ``packet_id``, ``kind`` (``above``,
    ``below`` or ``jitter``), the observed value and the limit, in ps.
    """
    if report.count == 0:
        return []
    slack = report.slack_ps if slack_ps is None else slack_ps
    hi = bounds.d_upper * PS + slack
    lo = bounds.d_lower * PS - slack
    d = report.delay_ps
    out = []
    for idx in np.flatnonzero(d > hi).tolist():
        out.append({"packet_id": int(report.packet_id[idx]), "kind": "above",
                    "delay_ps": int(d[idx]), "limit_ps": hi})
    for idx in np.flatnonzero(d < lo).tolist():
        out.append({"packet_id": int(report.packet_id[idx]), "kind": "below",
                    "delay_ps": int(d[idx]), "limit_ps": lo})
    spread = int(d.max() - d.min())
    if spread > bounds.jitter * PS + 2 * slack:
        out.append({"packet_id": None, "kind": "jitter", "delay_ps": spread,
                    "limit_ps": bounds.jitter * PS + 2 * slack})
    return out


def concat_reports(reports: Sequence[SimReport]) -> SimReport:
    """Stack reports (for example one per block of a path) without re-checking."""
    return SimReport(
        packet_id=np.concatenate([r.packet_id for r in reports]),
        trial=np.concatenate([r.trial for r in reports]),
        entry_tai_ps=np.concatenate([r.entry_tai_ps for r in reports]),
        exit_tai_ps=np.concatenate([r.exit_tai_ps for r in reports]),
        reordered=np.concatenate([r.reordered for r in reports]),
        eligibility_local=np.concatenate([r.eligibility_local for r in reports]),
        reorder_events=[e for r in reports for e in r.reorder_events],
        violations=[v for r in reports for v in r.violations],
    )
