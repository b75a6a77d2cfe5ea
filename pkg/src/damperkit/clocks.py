"""Non-ideal clocks.

A local clock is described by three numbers:

``rho``
    stability bound (``>= 1``).  Over a measured duration ``d`` the clock's
    rate drifts from TAI by at most a factor ``rho``.
``eta``
    timing-jitter bound, charged once per measured duration.
``omega``
    time-error bound with respect to TAI; ``math.inf`` for a free-running
    (unsynchronized) clock.

A duration measured as ``d`` on such a clock lasts ``d + x`` in TAI with
``lo <= x <= hi`` (see :func:`delay_deviation_bounds`).

The module also builds concrete clock behaviours for the simulator.  Times
handed to a trajectory can use any unit as long as ``eta`` and ``omega`` of
the clock model are expressed in the same unit (the simulator uses
picoseconds).
"""

from __future__ import annotations

import bisect
import math
import random
from abc import ABC, abstractmethod
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

from .curves import Curve, LeakyBucket, Min, Shifted, shift_left
from .errors import ConfigError, DomainError

INF = math.inf


@dataclass(frozen=True)
class ClockModel:
    """Deviation envelope of every clock in a network."""

    rho: float = 1.0
    eta: float = 0.0
    omega: float = INF

    def __post_init__(self) -> None:
        if not self.rho >= 1:
            raise DomainError(f"stability bound rho must be >= 1, got {self.rho!r}")
        if not self.eta >= 0:
            raise DomainError(f"timing-jitter bound eta must be >= 0, got {self.eta!r}")
        if not self.omega > 0:
            raise DomainError(f"time-error bound omega must be > 0, got {self.omega!r}")

    @property
    def synchronized(self) -> bool:
        return not math.isinf(self.omega)

    def scaled(self, factor: float) -> "ClockModel":
        """Same clock with ``eta`` and ``omega`` expressed in another time unit."""
        return ClockModel(self.rho, self.eta * factor, self.omega * factor)

    def weakest(self, other: "ClockModel") -> "ClockModel":
        """Envelope that holds for clocks obeying either model."""
        return ClockModel(max(self.rho, other.rho), max(self.eta, other.eta), max(self.omega, other.omega))


# 802.1AS-style drift and jitter figures shared by all presets.
_TSN_RHO = 1.0 + 1e-4
_TSN_ETA = 2e-9

PRESETS: dict[str, ClockModel] = {
    "gptp": ClockModel(_TSN_RHO, _TSN_ETA, 1e-6),
    "white_rabbit": ClockModel(_TSN_RHO, _TSN_ETA, 100e-9),
    "ntp": ClockModel(_TSN_RHO, _TSN_ETA, 100e-3),
    "free_running": ClockModel(_TSN_RHO, _TSN_ETA, INF),
}


def preset(name: str) -> ClockModel:
    """Look up a named clock preset (``gptp``, ``white_rabbit``, ``ntp``, ``free_running``)."""
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown clock preset {name!r}; choose from {sorted(PRESETS)}") from None


PERFECT = ClockModel(1.0, 0.0, INF)


class Interval(NamedTuple):
    lo: float
    hi: float


def _two_omega(clock: ClockModel) -> float:
    return INF if math.isinf(clock.omega) else 2 * clock.omega


def delay_deviation_bounds(d_local: float, clock: ClockModel) -> Interval:
    """Range of ``d_TAI - d_local`` for a duration measured as ``d_local``.

    >>> iv = delay_deviation_bounds(250e-6, preset("free_running"))
    >>> round(iv.hi * 1e9, 6), round(iv.lo * 1e9, 4)
    (27.0, -26.9973)
    """
    if d_local < 0:
        raise DomainError(f"measured duration must be >= 0, got {d_local!r}")
    rho, eta = clock.rho, clock.eta
    cap = _two_omega(clock)
    hi = min((rho - 1) * d_local + eta, cap)
    lo = -min((1 - 1 / rho) * d_local + eta / rho, cap)
    return Interval(lo, hi)


def arrival_curve_to_tai(alpha: Curve, clock: ClockModel) -> Curve:
    """Re-express an arrival curve known in a local clock as a TAI curve.

    The result is ``t -> alpha(min(rho t + eta, t + 2 omega))``.
    """
    if clock.rho == 1 and clock.eta == 0:
        return alpha
    if isinstance(alpha, LeakyBucket):
        drift: Curve = LeakyBucket(alpha.rate * clock.rho, alpha.burst + alpha.rate * clock.eta, alpha.unit)
    else:
        drift = Shifted(alpha, clock.eta, clock.rho)
    if math.isinf(clock.omega):
        return drift
    return Min(drift, shift_left(alpha, 2 * clock.omega))


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

MODES = ("random", "fast_adversarial", "slow_adversarial", "sync_adversarial_fast", "sync_adversarial_slow")


class ClockTrajectory(ABC):
    """A concrete clock: reads TAI instants as local instants.

    ``tai_elapsed(start, d)`` answers the question the simulator asks most:
    a system starts a job at TAI ``start`` and holds it for ``d`` units of
    its own clock; how long does that last in TAI?
    """

    @abstractmethod
    def local(self, t_tai):
        """Local reading at TAI instant ``t_tai``."""

    @abstractmethod
    def tai(self, t_local):
        """TAI instant at which the clock reads ``t_local``."""

    def tai_elapsed(self, start_tai, d_local):
        return self.tai(self.local(start_tai) + d_local) - start_tai

    def local_elapsed(self, start_tai, end_tai):
        return self.local(end_tai) - self.local(start_tai)


class RandomTrajectory(ClockTrajectory):
    """Piecewise-affine clock with random slopes in ``[1/rho, rho]``.

    Segments are drawn lazily, so the trajectory can be queried at any
    non-negative instant.  When ``omega`` is finite the offset to TAI is kept
    inside ``[-omega, omega]`` by bending the slope of a segment that would
    otherwise leave the band.  The trajectory reads 0 at TAI 0.
    """

    def __init__(self, clock: ClockModel, seed: int, segment: float):
        self.clock = clock
        self.segment = segment
        self._rng = random.Random(seed)
        self._t = [0.0]
        self._l = [0.0]
        self._s: list[float] = []

    def _grow(self) -> None:
        rho, omega = self.clock.rho, self.clock.omega
        length = self.segment * self._rng.uniform(0.5, 1.5)
        slope = self._rng.uniform(1 / rho, rho) if rho > 1 else 1.0
        t0, l0 = self._t[-1], self._l[-1]
        if not math.isinf(omega):
            offset = l0 - t0
            end = offset + (slope - 1) * length
            if end > omega:
                slope = 1 + (omega - offset) / length
            elif end < -omega:
                slope = 1 + (-omega - offset) / length
        self._s.append(slope)
        self._t.append(t0 + length)
        self._l.append(l0 + slope * length)

    def local(self, t_tai):
        if t_tai < 0:
            raise DomainError("trajectories start at TAI 0")
        while self._t[-1] <= t_tai:
            self._grow()
        i = bisect.bisect_right(self._t, t_tai) - 1
        return self._l[i] + self._s[i] * (t_tai - self._t[i])

    def tai(self, t_local):
        if t_local < 0:
            raise DomainError("trajectories start at local time 0")
        while self._l[-1] <= t_local:
            self._grow()
        i = bisect.bisect_right(self._l, t_local) - 1
        return self._t[i] + (t_local - self._l[i]) / self._s[i]


class AdversarialTrajectory(ClockTrajectory):
    """Clock that realizes one extreme branch of the deviation envelope.

    The reading is affine (``local = t_tai / tai_per_local``) and every
    measured duration additionally gains ``per_measure`` in TAI (never
    going below zero).  The branch
    is fixed for the whole trace, so the envelope is honoured only by
    measurements for which that branch is the binding one; scripted traces
    choose their delays accordingly.
    """

    def __init__(self, mode: str, tai_per_local, per_measure):
        self.mode = mode
        self.tai_per_local = tai_per_local
        self.per_measure = per_measure

    def local(self, t_tai):
        return t_tai / self.tai_per_local

    def tai(self, t_local):
        return t_local * self.tai_per_local

    def tai_elapsed(self, start_tai, d_local):
        if d_local < 0:
            raise DomainError("measured durations are non-negative")
        out = d_local * self.tai_per_local + self.per_measure
        # Slow clocks cannot make a short measurement last negative time;
        # zero is still inside the envelope for such short durations.
        return out if out > 0 else out * 0


def sample_trajectory(
    clock: ClockModel,
    seed: int = 0,
    mode: str = "random",
    *,
    segment: float = 1e-3,
    exact: bool = False,
) -> ClockTrajectory:
    """Build a clock trajectory obeying ``clock``.

    ``segment`` is the mean random segment length in the caller's time unit.
    ``exact`` makes adversarial trajectories compute with fractions, so a
    scripted trace can be replayed without rounding.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown trajectory mode {mode!r}; choose from {MODES}")
    if mode == "random":
        return RandomTrajectory(clock, seed, segment)
    num = Fraction if exact else float
    rho, eta = num(clock.rho), num(clock.eta)
    if mode == "fast_adversarial":
        return AdversarialTrajectory(mode, rho, eta)
    if mode == "slow_adversarial":
        return AdversarialTrajectory(mode, 1 / rho, -eta / rho)
    if math.isinf(clock.omega):
        raise ConfigError(f"{mode} needs a finite time-error bound omega")
    two_omega = 2 * num(clock.omega)
    if mode == "sync_adversarial_fast":
        return AdversarialTrajectory(mode, num(1), two_omega)
    return AdversarialTrajectory(mode, num(1), -two_omega)
