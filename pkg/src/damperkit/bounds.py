"""Delay and jitter bounds for blocks ending in a damper.

A *block* is a sequence of delay elements followed by one damper:

* a JCS (jitter-compensated system) has a delay bound ``delta`` in its own
  clock and writes its earliness into the damper header, with error at most
  ``epsilon``;
* a BDS (bounded-delay system) has TAI delay bounds ``[pi_lower, pi_upper]``
  and jitter bound ``nu`` and is not compensated.

:func:`block_bounds` picks the right result for the damper variant and the
FIFO-ness of the elements.  Every result is a :class:`BoundsResult`, in
seconds of TAI.

>>> from damperkit import dampers
>>> from damperkit.clocks import preset
>>> blk = Block([JcsSpec(250e-6, 50e-9), BdsSpec(5e-6, 5e-6), JcsSpec(2e-6, 50e-9)],
...             dampers.from_tolerances("rcsp", 1e-6, 2e-9), preset("free_running"))
>>> r = theorem1_bounds(blk)
>>> round(r.d_upper * 1e6, 2)
257.13
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence, Union

from .clocks import ClockModel
from .curves import Curve, shift_left
from .dampers import DamperSpec, HeaderMode, Variant, ideal
from .errors import ContractError, DomainError

log = logging.getLogger(__name__)

INF = math.inf
_IDEAL = ideal()


@dataclass(frozen=True)
class JcsSpec:
    """Jitter-compensated system.

    ``delta`` is the local-time delay bound used for the header update and
    ``delta_min`` a local-time lower bound on the delay (only used for the
    jitter a non-FIFO prefix adds before a FIFO damper).
    """

    delta: float
    epsilon: float = 0.0
    fifo: bool = True
    clock_id: str | None = None
    delta_min: float = 0.0
    name: str | None = None

    def __post_init__(self) -> None:
        if self.delta < 0 or self.epsilon < 0:
            raise DomainError("JCS needs delta >= 0 and epsilon >= 0")
        if not 0 <= self.delta_min <= self.delta:
            raise DomainError("JCS needs 0 <= delta_min <= delta")


@dataclass(frozen=True)
class BdsSpec:
    """Bounded-delay system with TAI delay in ``[pi_lower, pi_upper]``.

    ``nu`` defaults to ``pi_upper - pi_lower``; a tighter value is allowed
    and is then used for jitter only.
    """

    pi_lower: float
    pi_upper: float
    nu: float | None = None
    fifo: bool = True
    name: str | None = None

    def __post_init__(self) -> None:
        if not 0 <= self.pi_lower <= self.pi_upper:
            raise DomainError("BDS needs 0 <= pi_lower <= pi_upper")
        if self.nu is None:
            object.__setattr__(self, "nu", self.pi_upper - self.pi_lower)
        if self.nu < 0:
            raise DomainError("BDS jitter bound must be non-negative")

    @classmethod
    def constant(cls, delay: float, name: str | None = None) -> "BdsSpec":
        return cls(delay, delay, 0.0, name=name)


Element = Union[JcsSpec, BdsSpec]


@dataclass(frozen=True)
class Block:
    elements: tuple[Element, ...]
    damper: DamperSpec
    clock: ClockModel = field(default_factory=ClockModel)
    distinct_clock_count: int | None = None
    name: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "elements", tuple(self.elements))
        for e in self.elements:
            if not isinstance(e, (JcsSpec, BdsSpec)):
                raise DomainError(f"block elements must be JcsSpec or BdsSpec, got {type(e).__name__}")
        if self.distinct_clock_count is not None and not 0 <= self.distinct_clock_count <= self.k:
            raise DomainError("distinct clock count X must satisfy 0 <= X <= K")

    @property
    def jcs(self) -> list[JcsSpec]:
        return [e for e in self.elements if isinstance(e, JcsSpec)]

    @property
    def bds(self) -> list[BdsSpec]:
        return [e for e in self.elements if isinstance(e, BdsSpec)]

    @property
    def k(self) -> int:
        return len(self.jcs)

    @property
    def all_fifo(self) -> bool:
        return all(e.fifo for e in self.elements)

    def last_non_fifo(self) -> int | None:
        idx = [i for i, e in enumerate(self.elements) if not e.fifo]
        return idx[-1] if idx else None


@dataclass(frozen=True)
class Breakdown:
    """Where the jitter comes from.

    ``basic`` is the jitter with perfect clocks and exact headers (BDS
    jitter plus damper tolerances), ``error_term`` the header errors,
    ``clock_term`` the clock penalties and ``fifo_term`` what FIFO
    constraints add (head-of-line queueing, non-FIFO prefixes).
    """

    basic: float
    error_term: float
    clock_term: float
    fifo_term: float = 0.0

    @property
    def total(self) -> float:
        return self.basic + self.error_term + self.clock_term + self.fifo_term

    def __add__(self, other: "Breakdown") -> "Breakdown":
        return Breakdown(self.basic + other.basic, self.error_term + other.error_term,
                         self.clock_term + other.clock_term, self.fifo_term + other.fifo_term)


@dataclass(frozen=True)
class BoundsResult:
    d_upper: float
    d_lower: float
    jitter: float
    psi_upper: float
    psi_lower: float
    breakdown: Breakdown
    label: str | None = None

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "d_upper": self.d_upper,
            "d_lower": self.d_lower,
            "jitter": self.jitter,
            "psi_upper": self.psi_upper,
            "psi_lower": self.psi_lower,
            "basic": self.breakdown.basic,
            "error_term": self.breakdown.error_term,
            "clock_term": self.breakdown.clock_term,
            "fifo_term": self.breakdown.fifo_term,
        }


@dataclass(frozen=True)
class ReorderMetrics:
    rto: float
    rbo: float


# ---------------------------------------------------------------------------
# Theorem-1 family
# ---------------------------------------------------------------------------


def _sync_cap(clock: ClockModel, count: int) -> float:
    return INF if math.isinf(clock.omega) else 2 * count * clock.omega


def psi_terms(block: Block) -> tuple[float, float]:
    """Clock penalties ``(psi_upper, psi_lower)`` of a block."""
    clock, d = block.clock, block.damper
    k = block.k
    x = k if block.distinct_clock_count is None else block.distinct_clock_count
    sum_delta = math.fsum(j.delta for j in block.jcs)
    sum_eps = math.fsum(j.epsilon for j in block.jcs)
    cap = _sync_cap(clock, x + 1)
    rho, eta = clock.rho, clock.eta
    up = (rho - 1) * (d.delta_u + sum_delta + sum_eps) + (k + 1) * eta
    lo = (1 - 1 / rho) * (-d.delta_l + sum_delta - sum_eps) + (k + 1) * eta / rho
    return min(up, cap), min(lo, cap)


def _core(block: Block, label: str | None = None) -> BoundsResult:
    d = block.damper
    psi_up, psi_lo = psi_terms(block)
    sum_delta = math.fsum(j.delta for j in block.jcs)
    sum_eps = math.fsum(j.epsilon for j in block.jcs)
    pi_up = math.fsum(b.pi_upper for b in block.bds)
    pi_lo = math.fsum(b.pi_lower for b in block.bds)
    nu = math.fsum(b.nu for b in block.bds)
    d_upper = sum_delta + pi_up + d.delta_u + sum_eps + psi_up
    d_lower = sum_delta + pi_lo - d.delta_l - sum_eps - psi_lo
    breakdown = Breakdown(nu + d.delta_u + d.delta_l, 2 * sum_eps, psi_up + psi_lo)
    jitter = nu + d.delta_u + d.delta_l + 2 * sum_eps + psi_up + psi_lo
    return BoundsResult(d_upper, d_lower, jitter, psi_up, psi_lo, breakdown, label or block.name)


def base_bounds(block: Block) -> BoundsResult:
    """The block bounds of a damper without FIFO constraint, whatever the variant.

    Processing times and FIFO penalties of the actual variant are ignored.
    """
    return _core(block)


def theorem1_bounds(block: Block) -> BoundsResult:
    """Bounds for a damper without FIFO constraint (ideal or with tolerances)."""
    v = block.damper.variant
    if v is Variant.RESEQUENCING:
        raise ContractError("re-sequencing damper: use theorem3_bounds or theorem5_bounds")
    if v is Variant.HEAD_OF_LINE:
        raise ContractError("head-of-line damper: use theorem4_bounds or theorem6_bounds")
    return _core(block)


def theorem3_bounds(block: Block) -> BoundsResult:
    """Re-sequencing damper behind FIFO elements: same bounds as without FIFO constraint."""
    if block.damper.variant is not Variant.RESEQUENCING:
        raise ContractError("theorem3_bounds needs a re-sequencing damper")
    if not block.all_fifo:
        raise ContractError("non-FIFO element in block: use theorem5_bounds")
    return _core(block)


@functools.lru_cache(maxsize=4096)
def hol_theta(alpha_packets: Curve, phi_max: float, v: float) -> float:
    """Head-of-line queueing penalty ``max_k {k phi_max - alpha_down(k)} + v``.

    ``alpha_packets`` is the per-packet arrival curve of the traffic sharing
    the damper queue.  Returns ``inf`` when packets may arrive faster than
    one per ``phi_max``.  Results are cached, since a network analysis asks
    for the same queue aggregate once per flow sharing it.
    """
    if alpha_packets.unit != "packets":
        raise DomainError("hol_theta needs a per-packet arrival curve")
    if phi_max < 0:
        raise DomainError("phi_max must be >= 0")
    sigma, rate = alpha_packets.upper_affine()
    if phi_max > 0 and rate * phi_max >= 1:
        log.warning("head-of-line damper unstable: arrival rate %.6g pkt/s >= 1/phi_max", rate)
        return INF
    best = -INF
    k = 1
    while True:
        best = max(best, k * phi_max - alpha_packets.lower_pseudo_inverse(k))
        k += 1
        # alpha_down(k) >= (k - sigma) / rate, so later terms are bounded by:
        if rate == 0:
            if k > sigma + 1:
                break
            continue
        ceiling = k * phi_max - (k - sigma) / rate
        if k > sigma and ceiling <= best:
            break
        if k > 10_000_000:
            raise DomainError("hol_theta did not terminate; arrival curve too bursty")
    return best + v


def _check_hol(block: Block, alpha_packets: Curve) -> None:
    if block.damper.variant is not Variant.HEAD_OF_LINE:
        raise ContractError("needs a head-of-line damper")
    if alpha_packets.unit != "packets":
        raise DomainError("head-of-line bounds need a per-packet arrival curve")


def _with_fifo_term(base: BoundsResult, up: float, lo: float) -> BoundsResult:
    extra = up - lo
    bd = replace(base.breakdown, fifo_term=base.breakdown.fifo_term + extra)
    return replace(base, d_upper=base.d_upper + up, d_lower=base.d_lower + lo,
                   jitter=base.jitter + extra, breakdown=bd)


def theorem4_bounds(block: Block, alpha_packets: Curve) -> BoundsResult:
    """Head-of-line damper behind FIFO elements."""
    _check_hol(block, alpha_packets)
    if not block.all_fifo:
        raise ContractError("non-FIFO element in block: use theorem6_bounds")
    base = _core(block)
    d = block.damper
    if d.phi_max == 0:
        return base
    theta = hol_theta(alpha_packets, d.phi_max, base.jitter)
    return _with_fifo_term(base, theta, d.phi_min)


def theorem5_bounds(block: Block, j: float) -> BoundsResult:
    """Re-sequencing damper behind a non-FIFO prefix whose jitter is ``j``."""
    if block.damper.variant is not Variant.RESEQUENCING:
        raise ContractError("theorem5_bounds needs a re-sequencing damper")
    if j < 0:
        raise DomainError("prefix jitter must be >= 0")
    return _with_fifo_term(_core(block), j, 0.0)


def theorem6_bounds(block: Block, j: float, alpha_packets: Curve) -> BoundsResult:
    """Head-of-line damper behind a non-FIFO prefix whose jitter is ``j``."""
    _check_hol(block, alpha_packets)
    if j < 0:
        raise DomainError("prefix jitter must be >= 0")
    base = _core(block)
    d = block.damper
    if d.phi_max == 0:
        return _with_fifo_term(base, j, 0.0)
    theta = hol_theta(alpha_packets, d.phi_max, base.jitter + j)
    return _with_fifo_term(base, j + theta, d.phi_min)


def prefix_jitter(block: Block, e_index: int, convention: str = "compensated") -> float:
    """Jitter accumulated by the elements ``0..e_index`` of a block.

    ``convention="compensated"`` (the default) evaluates the block jitter
    formula on the prefix with an ideal damper placed right after it:
    ``sum(nu) + 2 K epsilon`` plus the clock penalties of the prefix.

    ``convention="raw"`` is the jitter of the packets as they really leave
    element ``e_index``, before any damper compensates them.  Each JCS
    contributes the spread of its TAI delay, from ``delta_min`` shrunk by
    the slowest admissible clock to ``delta`` stretched by the fastest one;
    each BDS contributes ``nu``.  A non-FIFO prefix is not compensated, so
    this is the value :func:`block_bounds` feeds to the non-FIFO bounds.
    """
    if not 0 <= e_index < len(block.elements):
        raise DomainError(f"element index {e_index} outside the block")
    prefix = block.elements[: e_index + 1]
    if convention == "compensated":
        sub = Block(prefix, _IDEAL, block.clock)
        return _core(sub).jitter
    if convention != "raw":
        raise DomainError(f"unknown prefix jitter convention {convention!r}")
    clock = block.clock
    cap = _sync_cap(clock, 1)
    rho, eta = clock.rho, clock.eta
    total = []
    for e in prefix:
        if isinstance(e, BdsSpec):
            total.append(e.nu)
            continue
        hi = e.delta + min((rho - 1) * e.delta + eta, cap)
        lo = max(0.0, e.delta_min - min((1 - 1 / rho) * e.delta_min + eta / rho, cap))
        total.append(hi - lo)
    return math.fsum(total)


def block_bounds(block: Block, alpha_packets: Curve | None = None, j: float | None = None) -> BoundsResult:
    """Bounds for any block, choosing the result that fits its shape.

    For FIFO dampers behind a non-FIFO element, ``j`` defaults to the raw
    :func:`prefix_jitter` up to the last non-FIFO element.
    """
    v = block.damper.variant
    if v in (Variant.IDEAL, Variant.TOLERANCE):
        return theorem1_bounds(block)
    last = block.last_non_fifo()
    if j is None:
        j = 0.0 if last is None else prefix_jitter(block, last, "raw")
    if v is Variant.RESEQUENCING:
        return theorem3_bounds(block) if last is None else theorem5_bounds(block, j)
    if alpha_packets is None:
        raise ContractError("head-of-line bounds need the per-packet arrival curve")
    return theorem4_bounds(block, alpha_packets) if last is None else theorem6_bounds(block, j, alpha_packets)


# ---------------------------------------------------------------------------
# Paths
# ---------------------------------------------------------------------------


def e2e_sum(parts: Sequence[BoundsResult | BdsSpec], label: str | None = None) -> BoundsResult:
    """Concatenate blocks (and trailing BDSs) by adding their bounds."""
    if not parts:
        raise DomainError("e2e_sum needs at least one part")
    ups, los, vs, pus, pls = [], [], [], [], []
    bd = Breakdown(0.0, 0.0, 0.0)
    for p in parts:
        if isinstance(p, BdsSpec):
            ups.append(p.pi_upper)
            los.append(p.pi_lower)
            vs.append(p.nu)
            bd = bd + Breakdown(p.nu, 0.0, 0.0)
        else:
            ups.append(p.d_upper)
            los.append(p.d_lower)
            vs.append(p.jitter)
            pus.append(p.psi_upper)
            pls.append(p.psi_lower)
            bd = bd + p.breakdown
    return BoundsResult(math.fsum(ups), math.fsum(los), math.fsum(vs),
                        math.fsum(pus), math.fsum(pls), bd, label)


def network_clock(blocks: Iterable[Block]) -> ClockModel:
    """Envelope valid for every clock met along a path."""
    out = None
    for b in blocks:
        out = b.clock if out is None else out.weakest(b.clock)
    return out if out is not None else ClockModel()


def theorem2_te_bounds(blocks: Sequence[Block], clock: ClockModel | None = None,
                       tail: Sequence[BdsSpec] = (), label: str | None = None) -> BoundsResult:
    """End-to-end bounds of ``N`` concatenated blocks with TE time-stamping.

    The damper of every block but the last must stamp theoretical
    eligibility times, and must share its clock with the first JCS of the
    next block.  ``tail`` holds BDSs after the last damper.
    """
    if not blocks:
        raise DomainError("theorem2_te_bounds needs at least one block")
    for i, b in enumerate(blocks):
        if b.damper.variant not in (Variant.IDEAL, Variant.TOLERANCE):
            raise ContractError(f"block {i}: TE bounds apply to dampers with tolerances only")
        if i < len(blocks) - 1 and b.damper.header_mode is not HeaderMode.TE_STAMPING:
            raise ContractError(f"block {i}: damper header mode must be te_stamping")
    clock = clock or network_clock(blocks)
    n = len(blocks)
    jcs = [j for b in blocks for j in b.jcs]
    bds = [x for b in blocks for x in b.bds] + list(tail)
    m = len(jcs)
    delta = math.fsum(j.delta for j in jcs)
    eps = math.fsum(j.epsilon for j in jcs)
    pi_up = math.fsum(x.pi_upper for x in bds)
    pi_lo = math.fsum(x.pi_lower for x in bds)
    nu = math.fsum(x.nu for x in bds)
    du = [b.damper.delta_u for b in blocks]
    du_all, du_head = math.fsum(du), math.fsum(du[:-1])
    dl_last, du_last = blocks[-1].damper.delta_l, du[-1]

    rho, eta = clock.rho, clock.eta
    cap = _sync_cap(clock, m + n)
    psi_up = min((rho - 1) * (delta + du_all + eps) + (m + n) * eta, cap)
    psi_lo = min((1 - 1 / rho) * (delta - dl_last + du_head + eps) + (m + n) * eta / rho, cap)

    d_upper = delta + pi_up + du_all + eps + psi_up
    d_lower = delta + pi_lo + du_head - dl_last - eps - psi_lo
    jitter = nu + du_last + dl_last + 2 * eps + psi_up + psi_lo
    bd = Breakdown(nu + du_last + dl_last, 2 * eps, psi_up + psi_lo)
    return BoundsResult(d_upper, d_lower, jitter, psi_up, psi_lo, bd, label)


def te_prefix_jitters(blocks: Sequence[Block], clock: ClockModel | None = None) -> list[float]:
    """Jitter from the path entrance to the output of each damper, TE mode."""
    clock = clock or network_clock(blocks)
    return [theorem2_te_bounds(blocks[: i + 1], clock).jitter for i in range(len(blocks))]


# ---------------------------------------------------------------------------
# Synchronization threshold
# ---------------------------------------------------------------------------


def sync_threshold(k: int, delta_u: float, epsilon: float, clock: ClockModel) -> float:
    """Largest sum of JCS delay bounds for which synchronization does not help.

    Below this value the drift branch of both clock penalties is the smaller
    one, so the time-error bound plays no role.
    """
    if clock.rho == 1 or math.isinf(clock.omega):
        return INF
    return (k + 1) / (clock.rho - 1) * (2 * clock.omega - clock.eta) - delta_u - k * epsilon


def simplified_sync_threshold(clock: ClockModel) -> float:
    """Sufficient version of :func:`sync_threshold`: ``2 (2 omega - eta) / (rho - 1)``."""
    if clock.rho == 1 or math.isinf(clock.omega):
        return INF
    return 2 * (2 * clock.omega - clock.eta) / (clock.rho - 1)


# ---------------------------------------------------------------------------
# Output arrival curves and reordering
# ---------------------------------------------------------------------------


def propagate_curve(alpha: Curve, v: float) -> Curve:
    """Arrival curve at a block output: ``t -> alpha(t + v)``."""
    return shift_left(alpha, v)


def reorder_metrics(alpha: Curve, v: float, l_min: float) -> ReorderMetrics:
    """Re-sequencing buffer timeout and size for a flow with jitter ``v``.

    ``alpha`` is a byte arrival curve; ``l_min`` the minimum packet size.
    """
    if v < 0 or l_min <= 0:
        raise DomainError("reorder_metrics needs v >= 0 and l_min > 0")
    rto = max(0.0, v - alpha.lower_pseudo_inverse(2 * l_min))
    rbo = max(0.0, alpha.eval(v) - l_min)
    return ReorderMetrics(rto, rbo)
