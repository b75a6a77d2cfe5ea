"""Single-packet traces that reach the delay bounds exactly.

Every clock of the block (one per JCS plus the damper's) is adversarial
and deviates from TAI by the same extreme on every measurement:

=============  ================================
target         TAI duration of a measured ``m``
=============  ================================
upper_drift    ``rho m + eta``
upper_sync     ``m + 2 omega``
lower_drift    ``(m - eta) / rho``
lower_sync     ``m - 2 omega``
=============  ================================

Such a clock is admissible only while that extreme is also the binding
side of the clock envelope, which restricts every measurement to a window.
The JCS delays are spread so that both they and the damper's holding time
fall inside it.  Upper traces use ``+epsilon`` header errors, maximal BDS
delays and the latest release; lower traces the opposite.  The release
instant sits exactly on the tolerance edge, as it does for a rounding
damper whose slot grid happens to be aligned with it.

Everything is computed with fractions and rounded to picoseconds once.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from ..bounds import Block, base_bounds
from ..dampers import Variant
from ..errors import ConfigError, ContractError
from .engine import SimReport, check_bounds
from .sources import PS

TARGETS = ("upper_drift", "upper_sync", "lower_drift", "lower_sync")

F = Fraction
INF = math.inf


def _window(target: str, rho: F, eta: F, omega) -> tuple[F, float | F]:
    """Measurements ``m`` for which the target's extreme is admissible."""
    two_w = None if math.isinf(omega) else 2 * F(omega)
    if target in ("upper_sync", "lower_sync") and two_w is None:
        raise ConfigError(f"{target} needs a finite time-error bound omega")
    if target == "upper_drift":
        if two_w is None:
            return F(0), INF
        if rho == 1:
            return (F(0), INF) if eta <= two_w else (F(1), F(0))
        return F(0), (two_w - eta) / (rho - 1)
    if target == "upper_sync":
        if rho == 1:
            return (F(0), INF) if eta >= two_w else (F(1), F(0))
        return max(F(0), (two_w - eta) / (rho - 1)), INF
    if target == "lower_drift":
        if two_w is None:
            return eta, INF
        if rho == 1:
            return (eta, INF) if eta <= two_w else (F(1), F(0))
        return eta, (two_w - eta / rho) / (1 - 1 / rho)
    # lower_sync
    if rho == 1:
        return (two_w, INF) if eta >= two_w else (F(1), F(0))
    return max(two_w, (two_w - eta / rho) / (1 - 1 / rho)), INF


def _tai(target: str, m: F, rho: F, eta: F, omega) -> F:
    if target == "upper_drift":
        return rho * m + eta
    if target == "lower_drift":
        return (m - eta) / rho
    two_w = 2 * F(omega)
    return m + two_w if target == "upper_sync" else m - two_w


def _spread(deltas: list[F], fixed: F, lo: F, hi) -> list[F] | None:
    """JCS delays ``d_i`` in ``[lo, min(hi, delta_i)]`` with hold ``fixed - sum(d)``
    in ``[lo, hi]``; the largest delays are preferred."""
    caps = [min(d, hi) if not (isinstance(hi, float) and math.isinf(hi)) else d for d in deltas]
    if any(c < lo for c in caps):
        return None
    top = sum(caps, F(0))
    bottom = lo * len(deltas)
    # hold in [lo, hi]  <=>  sum(d) in [fixed - hi, fixed - lo]
    want_hi = fixed - lo
    want_lo = -INF if isinstance(hi, float) else fixed - hi
    target_sum = min(top, want_hi)
    if target_sum < bottom or target_sum < want_lo:
        return None
    out = list(caps)
    excess = top - target_sum
    for i, c in enumerate(out):
        cut = min(excess, c - lo)
        out[i] = c - cut
        excess -= cut
    return out


def tightness_trace(block: Block, target: str) -> SimReport:
    """Replay the extreme single-packet scenario for ``target``.

    The report holds one packet entering at TAI 0; its delay is the exact
    trace delay rounded to the picosecond, and ``report.bounds`` holds the
    bounds it is meant to reach.
    """
    if target not in TARGETS:
        raise ConfigError(f"unknown tightness target {target!r}; choose from {TARGETS}")
    d = block.damper
    if d.variant is Variant.HEAD_OF_LINE and d.phi_max > 0:
        raise ContractError("single-packet traces cannot reach the head-of-line penalty")
    if block.distinct_clock_count is not None and block.distinct_clock_count != block.k:
        raise ContractError("tightness traces need one distinct clock per JCS")
    clock = block.clock
    rho, eta = F(clock.rho), F(clock.eta)
    lo, hi = _window(target, rho, eta, clock.omega)
    upper = target.startswith("upper")

    jcs = block.jcs
    deltas = [F(j.delta) for j in jcs]
    eps = sum((F(j.epsilon) for j in jcs), F(0))
    if upper:
        fixed = sum(deltas, F(0)) + eps + F(d.delta_u)
    else:
        fixed = sum(deltas, F(0)) - eps - F(d.delta_l)
    delays = _spread(deltas, fixed, lo, hi) if lo <= hi else None
    if delays is None:
        raise ConfigError(f"block admits no {target} trace: measurements cannot stay on the {target} branch")
    hold = fixed - sum(delays, F(0))

    total = F(0)
    for m in delays:
        total += _tai(target, m, rho, eta, clock.omega)
    for b in block.bds:
        total += F(b.pi_upper if upper else b.pi_lower)
    total += _tai(target, hold, rho, eta, clock.omega)

    # A lone packet never waits behind another one, so re-sequencing and
    # penalty-free head-of-line dampers share the plain block bounds.
    bounds = base_bounds(block)
    exit_ps = round(total * PS)
    report = SimReport(
        packet_id=np.zeros(1, dtype=np.int64),
        trial=np.zeros(1, dtype=np.int64),
        entry_tai_ps=np.zeros(1, dtype=np.int64),
        exit_tai_ps=np.asarray([exit_ps], dtype=np.int64),
        reordered=np.zeros(1, dtype=bool),
        eligibility_local=np.asarray([float(hold * PS)]),
        bounds=bounds,
        slack_ps=1.0,
    )
    report.violations = check_bounds(report, bounds, slack_ps=1.0)
    report.extra.update(exact_delay_s=total, local_delays_s=delays, hold_local_s=hold)
    return report
