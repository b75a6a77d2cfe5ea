"""Fixed-point total flow analysis (TFA) with or without dampers.

Each flow crosses a sequence of nodes.  Every hop ``u -> v`` is an output
port of ``u`` (a FIFO queue served by a rate-latency curve), a propagation
link, then the switching fabric of ``v`` when ``v`` forwards the flow
further.  With dampers, the elements of a hop form one block ending at the
damper in ``v``:

    [queue of u -> v (JCS), link (BDS), fabric of v (JCS)] -> damper at v

The per-port delay bound of the queue is a TAI duration obtained by
horizontal deviation; the JCS delay bound used in the damper header is its
local-time image ``rho d + eta``.

Arrival curves at a port are the source curves shifted left by the jitter
accumulated so far: the cumulative block jitter with dampers, or the
cumulative per-hop delay bound without them.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from .bounds import (
    BdsSpec,
    Block,
    BoundsResult,
    Breakdown,
    JcsSpec,
    block_bounds,
    e2e_sum,
    prefix_jitter,
    theorem2_te_bounds,
)
from .clocks import ClockModel, preset
from .curves import Curve, PacketStaircase, RateLatency, Sum, horizontal_deviation, shift_left
from .dampers import DamperSpec, HeaderMode, Variant, from_tolerances
from .errors import ConfigError

log = logging.getLogger(__name__)

INF = math.inf
DEPLOYMENTS = ("none", "rcsp", "rgcq_te", "fopleq", "hol")
CONVERGENCE_TOLERANCE = 1e-12  # one picosecond
MAX_ITERATIONS = 1000


def default_dampers() -> dict[str, DamperSpec]:
    """Damper settings of the reference case study."""
    return {
        "rcsp": from_tolerances("rcsp", 1e-6, 2e-9),
        "rgcq_te": from_tolerances("rgcq", 2e-9, 1e-6, HeaderMode.TE_STAMPING),
        "fopleq": from_tolerances("fopleq", 1e-6, 2e-9),
        "hol": from_tolerances("hol", 2e-9, 2e-9, phi_min=0.0, phi_max=5e-9),
    }


@dataclass(frozen=True)
class NetFlow:
    id: str
    path: tuple[str, ...]
    alpha: Curve
    alpha_packets: Curve | None = None
    l_min: float | None = None
    l_max: float | None = None

    @property
    def ports(self) -> list[tuple[str, str]]:
        return list(zip(self.path, self.path[1:]))


@dataclass
class NetworkSpec:
    """Nodes, per-port service curves, fabrics, links and flows.

    ``nodes`` maps node id to ``"switch"`` or ``"host"``.  ``links`` lists
    the directed links that exist; when empty, every hop used by a flow is
    taken to be a link.  ``service`` and ``propagation`` apply to every
    port unless overridden in ``port_service`` / ``link_propagation``.
    """

    nodes: dict[str, str]
    flows: list[NetFlow]
    service: Curve
    fabric: JcsSpec = field(default_factory=lambda: JcsSpec(2e-6, 0.0, delta_min=0.5e-6, name="fabric"))
    queue_epsilon: float = 0.0
    propagation: float = 0.0
    clock: ClockModel = field(default_factory=lambda: preset("free_running"))
    links: list[tuple[str, str]] = field(default_factory=list)
    port_service: dict[tuple[str, str], Curve] = field(default_factory=dict)
    link_propagation: dict[tuple[str, str], float] = field(default_factory=dict)
    dampers: dict[str, DamperSpec] = field(default_factory=default_dampers)
    name: str = "network"

    def __post_init__(self) -> None:
        known = set(self.links)
        ids = [f.id for f in self.flows]
        if len(set(ids)) != len(ids):
            raise ConfigError("flow ids must be unique")
        for f in self.flows:
            if len(f.path) < 2:
                raise ConfigError(f"flow {f.id}: a path needs at least two nodes")
            for n in f.path:
                if n not in self.nodes:
                    raise ConfigError(f"flow {f.id}: unknown node {n!r}")
            if len(set(f.path)) != len(f.path):
                raise ConfigError(f"flow {f.id}: path visits a node twice")
            for hop in f.ports:
                if known and hop not in known:
                    raise ConfigError(f"flow {f.id}: no link {hop[0]} -> {hop[1]}")
            for n in f.path[1:-1]:
                if self.nodes[n] != "switch":
                    raise ConfigError(f"flow {f.id}: intermediate node {n} is not a switch")
            if f.alpha.unit != "bytes":
                raise ConfigError(f"flow {f.id}: the source arrival curve must be in bytes")
        for key in ("rcsp", "rgcq_te", "fopleq", "hol"):
            self.dampers.setdefault(key, default_dampers()[key])

    @property
    def ports(self) -> list[tuple[str, str]]:
        seen: dict[tuple[str, str], None] = {}
        for f in self.flows:
            for p in f.ports:
                seen.setdefault(p)
        return list(seen)

    def service_of(self, port: tuple[str, str]) -> Curve:
        return self.port_service.get(port, self.service)

    def propagation_of(self, port: tuple[str, str]) -> float:
        return self.link_propagation.get(port, self.propagation)

    def packet_curve(self, flow: NetFlow) -> Curve:
        if flow.alpha_packets is not None:
            return flow.alpha_packets
        a = flow.alpha
        if isinstance(a, PacketStaircase):
            return PacketStaircase(a.burst_packets, a.period, a.packets_per_period)
        if flow.l_min:
            return _bytes_to_packets(a, flow.l_min)
        raise ConfigError(f"flow {flow.id}: head-of-line analysis needs alpha_packets or l_min")


def _bytes_to_packets(alpha: Curve, l_min: float) -> Curve:
    from .curves import LeakyBucket

    if isinstance(alpha, LeakyBucket):
        return LeakyBucket(alpha.rate / l_min, alpha.burst / l_min, unit="packets")
    raise ConfigError("cannot derive a per-packet curve from this byte curve; give alpha_packets")


# ---------------------------------------------------------------------------
# Delay of one port
# ---------------------------------------------------------------------------


def node_delay_bound(aggregate_alpha: Curve | None, beta: Curve) -> float:
    """Delay bound of a FIFO port serving ``aggregate_alpha`` with ``beta``.

    An empty aggregate (``None`` or a sum with no terms) waits only for the
    service latency.  Instability returns ``inf`` and logs a warning.
    """
    if aggregate_alpha is None or (isinstance(aggregate_alpha, Sum) and not aggregate_alpha.terms):
        if isinstance(beta, RateLatency):
            return beta.latency
        return beta.lower_affine()[1]
    d = horizontal_deviation(aggregate_alpha, beta)
    if math.isinf(d):
        log.warning("port unstable: aggregate rate %.6g exceeds service rate %.6g",
                    aggregate_alpha.long_term_rate, beta.long_term_rate)
    return d


# ---------------------------------------------------------------------------
# Per-flow structure
# ---------------------------------------------------------------------------


def _fabric_tai_range(net: NetworkSpec) -> tuple[float, float]:
    """TAI interval of a fabric delay measured on the local clock."""
    c, f = net.clock, net.fabric
    cap = INF if math.isinf(c.omega) else 2 * c.omega
    hi = f.delta + min((c.rho - 1) * f.delta + c.eta, cap)
    lo = max(0.0, f.delta_min - min((1 - 1 / c.rho) * f.delta_min + c.eta / c.rho, cap))
    return lo, hi


def _local_bound(net: NetworkSpec, d_tai: float) -> float:
    """Largest local-clock reading of a TAI interval ``d_tai``."""
    return net.clock.rho * d_tai + net.clock.eta


def _damper_for(net: NetworkSpec, deployment: str) -> DamperSpec:
    d = net.dampers[deployment]
    if deployment == "rgcq_te" and d.header_mode is not HeaderMode.TE_STAMPING:
        d = replace(d, header_mode=HeaderMode.TE_STAMPING)
    return d


def flow_blocks(net: NetworkSpec, flow: NetFlow, delays: dict[tuple[str, str], float],
                deployment: str, fabric_fifo: bool = True) -> list[Block]:
    """The blocks of ``flow`` for a damper deployment and the current port delays."""
    out = []
    hops = flow.ports
    for i, port in enumerate(hops):
        elements: list = [
            JcsSpec(_local_bound(net, delays[port]), net.queue_epsilon, True, f"{port[0]}/q",
                    name=f"queue {port[0]}->{port[1]}"),
            BdsSpec.constant(net.propagation_of(port), name=f"link {port[0]}->{port[1]}"),
        ]
        if i < len(hops) - 1:
            f = net.fabric
            elements.append(JcsSpec(f.delta, f.epsilon, fabric_fifo, f"{port[1]}/fabric", f.delta_min,
                                    name=f"fabric {port[1]}"))
        out.append(Block(elements, _damper_for(net, deployment), net.clock,
                         name=f"{flow.id}:{port[1]}"))
    return out


# ---------------------------------------------------------------------------
# Fixed point
# ---------------------------------------------------------------------------


@dataclass
class TfaResult:
    """Outcome of :func:`fixed_point`.

    ``iterations`` counts update passes before the pass that confirmed the
    fixed point; a network whose delays are right at the first pass reports
    1.  ``entry_jitter[flow][i]`` is the jitter at the input of hop ``i``.
    """

    deployment: str
    fabric_fifo: bool
    per_port_delay: dict[tuple[str, str], float]
    per_flow_bounds: dict[str, BoundsResult]
    converged: bool
    iterations: int
    entry_jitter: dict[str, list[float]] = field(default_factory=dict)
    block_bounds: dict[str, list[BoundsResult]] = field(default_factory=dict)
    prefix_jitter: dict[str, list[float]] = field(default_factory=dict)
    theta: dict[str, list[float]] = field(default_factory=dict)
    trace: list[dict[tuple[str, str], float]] = field(default_factory=list)


class _Analysis:
    def __init__(self, net: NetworkSpec, deployment: str, fabric_fifo: bool):
        if deployment not in DEPLOYMENTS:
            raise ConfigError(f"unknown deployment {deployment!r}; choose from {DEPLOYMENTS}")
        self.net = net
        self.deployment = deployment
        self.fabric_fifo = fabric_fifo
        self.packet_curves = ({f.id: net.packet_curve(f) for f in net.flows}
                              if deployment == "hol" else {})

    # -- jitters ----------------------------------------------------------
    def no_damper_hops(self, flow: NetFlow, delays) -> list[float]:
        """Per-hop delay bound (TAI) without dampers."""
        _, fab_hi = _fabric_tai_range(self.net)
        hops = flow.ports
        out = []
        for i, port in enumerate(hops):
            d = delays[port] + self.net.propagation_of(port)
            if i < len(hops) - 1:
                d += fab_hi
            out.append(d)
        return out

    def damper_bounds(self, flow: NetFlow, delays, jitters) -> tuple[list[BoundsResult], list[float], list[float]]:
        """Block bounds, prefix jitters J and head-of-line penalties of ``flow``."""
        blocks = flow_blocks(self.net, flow, delays, self.deployment, self.fabric_fifo)
        results, js, thetas = [], [], []
        for i, blk in enumerate(blocks):
            last = blk.last_non_fifo()
            j = 0.0 if last is None else prefix_jitter(blk, last, "raw")
            alpha_pk = None
            if self.deployment == "hol":
                alpha_pk = self._hol_aggregate(flow, i, jitters)
            if self.deployment == "rgcq_te":
                res = None
            else:
                res = block_bounds(blk, alpha_pk, j if last is not None else None)
            results.append(res)
            js.append(j if self.deployment in ("fopleq", "hol") else 0.0)
            thetas.append(0.0 if res is None else res.breakdown.fifo_term - js[-1] + blk.damper.phi_min)
        if self.deployment == "rgcq_te":
            results = [theorem2_te_bounds(blocks[: i + 1], self.net.clock) for i in range(len(blocks))]
        return results, js, thetas

    def _hol_aggregate(self, flow: NetFlow, hop: int, jitters) -> Curve:
        """Per-packet curve of the traffic sharing ``flow``'s damper queue at hop ``hop``.

        The queue is shared by the flows that arrive on the same input link
        and leave through the same output port (or end at the same node).
        """
        port_in = flow.ports[hop]
        port_out = flow.ports[hop + 1] if hop + 1 < len(flow.ports) else None
        terms = []
        for g in self.net.flows:
            gp = g.ports
            for h, p in enumerate(gp):
                if p != port_in:
                    continue
                g_out = gp[h + 1] if h + 1 < len(gp) else None
                if g_out == port_out:
                    terms.append(shift_left(self.packet_curves[g.id], jitters[g.id][h]))
        return terms[0] if len(terms) == 1 else Sum(tuple(terms), unit="packets")

    def entry_jitters(self, delays, previous) -> dict[str, list[float]]:
        out = {}
        for f in self.net.flows:
            if self.deployment == "none":
                hops = self.no_damper_hops(f, delays)
                acc, cum = 0.0, []
                for h in hops:
                    cum.append(acc)
                    acc += h
            else:
                results, _, _ = self.damper_bounds(f, delays, previous)
                if self.deployment == "rgcq_te":
                    cum = [0.0] + [r.jitter for r in results[:-1]]
                else:
                    acc, cum = 0.0, []
                    for r in results:
                        cum.append(acc)
                        acc += r.jitter
            out[f.id] = cum
        return out

    def port_delays(self, jitters) -> dict[tuple[str, str], float]:
        terms: dict[tuple[str, str], list[Curve]] = {p: [] for p in self.net.ports}
        for f in self.net.flows:
            for i, port in enumerate(f.ports):
                terms[port].append(shift_left(f.alpha, jitters[f.id][i]))
        out = {}
        for port, ts in terms.items():
            agg = ts[0] if len(ts) == 1 else Sum(tuple(ts))
            out[port] = node_delay_bound(agg, self.net.service_of(port))
        return out

    # -- final bounds -----------------------------------------------------
    def flow_bounds(self, flow: NetFlow, delays, jitters) -> tuple[BoundsResult, list[BoundsResult], list[float], list[float]]:
        if self.deployment == "none":
            total = math.fsum(self.no_damper_hops(flow, delays))
            res = BoundsResult(total, 0.0, total, 0.0, 0.0, Breakdown(total, 0.0, 0.0), f"{flow.id}:none")
            return res, [], [], []
        results, js, thetas = self.damper_bounds(flow, delays, jitters)
        if self.deployment == "rgcq_te":
            e2e = replace(results[-1], label=f"{flow.id}:rgcq_te")
            per_block = [results[0]] + [
                replace(b, d_upper=b.d_upper - a.d_upper, d_lower=b.d_lower - a.d_lower, jitter=b.jitter - a.jitter)
                for a, b in zip(results, results[1:])
            ]
            return e2e, per_block, js, thetas
        return e2e_sum(results, f"{flow.id}:{self.deployment}"), results, js, thetas


def _unstable(delays: dict) -> bool:
    return any(math.isinf(d) or math.isnan(d) for d in delays.values())


def fixed_point(network: NetworkSpec, deployment: str = "none", fabric_fifo: bool = True,
                max_iterations: int = MAX_ITERATIONS, tolerance: float = CONVERGENCE_TOLERANCE) -> TfaResult:
    """Iterate port delays and propagated arrival curves to a fixed point.

    Each pass computes the flows' jitter at every port from the current
    port delays, rebuilds the per-port aggregates and recomputes the
    delays.  Iteration stops when no delay moves by ``tolerance`` or more,
    or after ``max_iterations`` passes (``converged=False``).  An unstable
    port stops the iteration at once with ``converged=False``.
    """
    an = _Analysis(network, deployment, fabric_fifo)
    ports = network.ports
    delays = {p: 0.0 for p in ports}
    jitters = {f.id: [0.0] * len(f.ports) for f in network.flows}
    converged = False
    passes = 0
    trace = []
    while passes < max_iterations:
        passes += 1
        jitters = an.entry_jitters(delays, jitters)
        new = an.port_delays(jitters)
        trace.append(new)
        if _unstable(new):
            delays = new
            break
        moved = max((abs(new[p] - delays[p]) for p in ports), default=0.0)
        delays = new
        if moved < tolerance and passes > 1:
            converged = True
            break
    iterations = passes - 1 if converged else passes

    result = TfaResult(deployment, fabric_fifo, delays, {}, converged, iterations, trace=trace)
    if _unstable(delays):
        for f in network.flows:
            result.per_flow_bounds[f.id] = BoundsResult(INF, 0.0, INF, INF, INF, Breakdown(INF, 0.0, 0.0),
                                                        f"{f.id}:{deployment}")
        return result
    jitters = an.entry_jitters(delays, jitters)
    for f in network.flows:
        e2e, per_block, js, thetas = an.flow_bounds(f, delays, jitters)
        result.per_flow_bounds[f.id] = e2e
        result.block_bounds[f.id] = per_block
        result.prefix_jitter[f.id] = js
        result.theta[f.id] = thetas
        result.entry_jitter[f.id] = jitters[f.id]
    return result


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

REPORT_COLUMNS = ("flow_id", "hops", "deployment", "fabric_fifo", "d_upper", "d_lower", "jitter",
                  "fifo_term", "theta_sum", "converged", "iterations")


def deployment_report(network: NetworkSpec, deployments: Sequence[str] = DEPLOYMENTS,
                      fabric_fifo: bool | Iterable[bool] = True) -> list[dict]:
    """One row per flow, deployment and fabric setting; durations in seconds."""
    fifo_opts = [fabric_fifo] if isinstance(fabric_fifo, bool) else list(fabric_fifo)
    rows = []
    for fifo in fifo_opts:
        for dep in deployments:
            res = fixed_point(network, dep, fifo)
            for f in network.flows:
                b = res.per_flow_bounds[f.id]
                rows.append({
                    "flow_id": f.id,
                    "hops": len(f.ports),
                    "deployment": dep,
                    "fabric_fifo": fifo,
                    "d_upper": b.d_upper,
                    "d_lower": b.d_lower,
                    "jitter": b.jitter,
                    "fifo_term": b.breakdown.fifo_term,
                    "theta_sum": math.fsum(res.theta.get(f.id, [])),
                    "converged": res.converged,
                    "iterations": res.iterations,
                })
    return rows


# ---------------------------------------------------------------------------
# Config conversion
# ---------------------------------------------------------------------------


def network_from_config(doc: dict) -> NetworkSpec:
    """Build a :class:`NetworkSpec` from a parsed ``"kind": "network"`` config."""
    from .config import clock_from, curve_from, damper_from, duration, packet_curve

    if doc.get("kind") != "network":
        raise ConfigError("expected a 'network' config")
    nodes = {n["id"]: n["kind"] for n in doc["nodes"]}
    if len(nodes) != len(doc["nodes"]):
        raise ConfigError("node ids must be unique")
    fab = doc.get("fabric", {})
    fabric = JcsSpec(duration(fab, "delta", 2e-6), duration(fab, "epsilon", 0.0),
                     delta_min=duration(fab, "delta_min", 0.0), name="fabric")
    links, port_service, link_prop = [], {}, {}
    for ln in doc.get("links", []):
        key = (ln["from"], ln["to"])
        for n in key:
            if n not in nodes:
                raise ConfigError(f"link {key[0]} -> {key[1]}: unknown node {n!r}")
        links.append(key)
        if "service" in ln:
            port_service[key] = curve_from(ln["service"])
        prop = duration(ln, "propagation")
        if prop is not None:
            link_prop[key] = prop
    flows = []
    for f in doc["flows"]:
        alpha = curve_from(f["alpha"])
        flows.append(NetFlow(f["id"], tuple(f["path"]), alpha,
                             packet_curve(alpha, f.get("alpha_packets"), f.get("l_min_bytes")),
                             f.get("l_min_bytes"), f.get("l_max_bytes")))
    dampers = default_dampers()
    for key, obj in doc.get("dampers", {}).items():
        d = damper_from(obj)
        want = {"rcsp": Variant.TOLERANCE, "rgcq_te": Variant.TOLERANCE,
                "fopleq": Variant.RESEQUENCING, "hol": Variant.HEAD_OF_LINE}[key]
        if d.variant is not want:
            raise ConfigError(f"dampers.{key}: preset {obj['preset']!r} does not fit this deployment")
        dampers[key] = d
    return NetworkSpec(
        nodes=nodes,
        flows=flows,
        service=curve_from(doc["service"]),
        fabric=fabric,
        queue_epsilon=duration(doc.get("queue", {}), "epsilon", 0.0),
        propagation=duration(doc.get("propagation", {}), "delay", 0.0),
        clock=clock_from(doc.get("clock")),
        links=links,
        port_service=port_service,
        link_propagation=link_prop,
        dampers=dampers,
        name=doc.get("name", "network"),
    )
