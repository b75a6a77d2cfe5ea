"""Non-decreasing curves used as arrival and service curves.

Every curve maps a window length ``t >= 0`` (seconds) to an amount of data,
counted either in bytes or in packets.  All curves are left-continuous and
vanish at ``t = 0``: a window of length zero holds nothing.  The value just
after the origin (``eval_right(0)``) is the burst.

Five representations are provided:

* :class:`LeakyBucket` -- ``b + r t`` for ``t > 0``.
* :class:`RateLatency` -- ``R [t - T]^+``.
* :class:`PacketStaircase` -- ``b + n (ceil(t / P) - 1)`` packets for ``t > 0``.
* :class:`Shifted` -- ``inner(scale * t + shift)`` (with the inner curve
  read as 0 for non-positive arguments).
* :class:`Min` and :class:`Sum` -- pointwise minimum and pointwise sum.

>>> lb = LeakyBucket(2e6, 10000)
>>> round(lb.eval(1.262e-6), 6)
10002.524
>>> lb.lower_pseudo_inverse(12000)
0.001
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Iterable

from .errors import DomainError

INF = math.inf

#: Relative tolerance used when snapping window lengths onto staircase steps.
SNAP_TOL = 1e-9

UNITS = ("bytes", "packets")


def _check_unit(unit: str) -> str:
    if unit not in UNITS:
        raise DomainError(f"unknown unit kind {unit!r}; expected one of {UNITS}")
    return unit


def _snap(q: float) -> float:
    """Snap ``q`` to the nearest integer when it is within rounding noise."""
    r = round(q)
    if abs(q - r) <= SNAP_TOL * max(1.0, abs(q)):
        return float(r)
    return q


def _check_t(t: float) -> float:
    if t < 0 or math.isnan(t):
        raise DomainError(f"curves are defined for t >= 0, got {t!r}")
    return t


class Curve(ABC):
    """A non-negative, non-decreasing, left-continuous function of ``t >= 0``."""

    unit: str

    # -- evaluation -------------------------------------------------------
    def eval(self, t: float) -> float:
        """Value at ``t`` (the left limit at jumps); 0 at the origin."""
        _check_t(t)
        if t == 0:
            return 0.0
        return self._value(t)

    def __call__(self, t: float) -> float:
        return self.eval(t)

    @abstractmethod
    def _value(self, t: float) -> float:
        """Value for ``t > 0``."""

    @abstractmethod
    def eval_right(self, t: float) -> float:
        """Right limit at ``t``; ``eval_right(0)`` is the burst."""

    # -- inverses ---------------------------------------------------------
    def lower_pseudo_inverse(self, k: float) -> float:
        """``inf {t >= 0 : f(t) >= k}``, or ``inf`` when never reached."""
        return _generic_inverse(self, k, strict=False)

    def upper_pseudo_inverse(self, k: float) -> float:
        """``inf {t >= 0 : f(t) > k}``, or ``inf`` when never exceeded."""
        return _generic_inverse(self, k, strict=True)

    # -- structure --------------------------------------------------------
    @abstractmethod
    def breakpoints(self, until: float) -> list[float]:
        """Sorted instants in ``[0, until]`` where the curve may jump or bend.

        Between two consecutive breakpoints the curve is affine.
        """

    @abstractmethod
    def upper_affine(self) -> tuple[float, float]:
        """``(burst, rate)`` with ``f(t) <= burst + rate t`` for every ``t > 0``."""

    @abstractmethod
    def lower_affine(self) -> tuple[float, float]:
        """``(rate, latency)`` with ``f(t) >= rate (t - latency)`` for every ``t``."""

    @property
    def long_term_rate(self) -> float:
        return self.upper_affine()[1]


@dataclass(frozen=True)
class LeakyBucket(Curve):
    """Token-bucket arrival curve ``b + r t`` (``t > 0``)."""

    rate: float
    burst: float
    unit: str = "bytes"

    def __post_init__(self) -> None:
        _check_unit(self.unit)
        if self.rate < 0 or self.burst < 0:
            raise DomainError("leaky bucket needs rate >= 0 and burst >= 0")

    def _value(self, t: float) -> float:
        return self.burst + self.rate * t

    def eval_right(self, t: float) -> float:
        _check_t(t)
        return self.burst + self.rate * t

    def lower_pseudo_inverse(self, k: float) -> float:
        if k <= self.burst:
            return 0.0
        if self.rate == 0:
            return INF
        return (k - self.burst) / self.rate

    def upper_pseudo_inverse(self, k: float) -> float:
        if k < self.burst:
            return 0.0
        if self.rate == 0:
            return INF
        return (k - self.burst) / self.rate

    def breakpoints(self, until: float) -> list[float]:
        return [0.0]

    def upper_affine(self) -> tuple[float, float]:
        return (self.burst, self.rate)

    def lower_affine(self) -> tuple[float, float]:
        return (self.rate, 0.0)


@dataclass(frozen=True)
class RateLatency(Curve):
    """Service curve ``R [t - T]^+``."""

    rate: float
    latency: float
    unit: str = "bytes"

    def __post_init__(self) -> None:
        _check_unit(self.unit)
        if self.rate < 0 or self.latency < 0:
            raise DomainError("rate-latency curve needs rate >= 0 and latency >= 0")

    def _value(self, t: float) -> float:
        return self.rate * max(0.0, t - self.latency)

    def eval_right(self, t: float) -> float:
        _check_t(t)
        return self.rate * max(0.0, t - self.latency)

    def lower_pseudo_inverse(self, k: float) -> float:
        if k <= 0:
            return 0.0
        if self.rate == 0:
            return INF
        return self.latency + k / self.rate

    def upper_pseudo_inverse(self, k: float) -> float:
        if k < 0:
            return 0.0
        if self.rate == 0:
            return INF
        return self.latency + k / self.rate

    def breakpoints(self, until: float) -> list[float]:
        return [0.0, self.latency] if 0 < self.latency <= until else [0.0]

    def upper_affine(self) -> tuple[float, float]:
        return (0.0, self.rate)

    def lower_affine(self) -> tuple[float, float]:
        return (self.rate, self.latency)


@dataclass(frozen=True)
class PacketStaircase(Curve):
    """Periodic staircase: ``burst_packets`` at once, then ``packets_per_period``
    more at every period boundary.

    ``f(t) = b + n (ceil(t / P) - 1)`` packets for ``t > 0``.  The steps are
    left-continuous, so a window of exactly one period still holds only ``b``
    packets.  With ``packet_bytes`` set, the curve counts bytes instead.

    >>> s = PacketStaircase(10, 8e-3, 10)
    >>> s.eval(8e-3), s.eval_right(8e-3)
    (10.0, 20.0)
    >>> s.lower_pseudo_inverse(11)
    0.008
    """

    burst_packets: float
    period: float
    packets_per_period: float
    packet_bytes: float | None = None
    unit: str = field(init=False)

    def __post_init__(self) -> None:
        if self.period <= 0:
            raise DomainError("staircase period must be positive")
        if self.burst_packets < 0 or self.packets_per_period < 0:
            raise DomainError("staircase packet counts must be non-negative")
        if self.packet_bytes is not None and self.packet_bytes <= 0:
            raise DomainError("packet_bytes must be positive")
        object.__setattr__(self, "unit", "packets" if self.packet_bytes is None else "bytes")

    @property
    def _scale(self) -> float:
        return 1.0 if self.packet_bytes is None else float(self.packet_bytes)

    def _value(self, t: float) -> float:
        steps = math.ceil(_snap(t / self.period)) - 1
        return self._scale * (self.burst_packets + self.packets_per_period * steps)

    def eval_right(self, t: float) -> float:
        _check_t(t)
        steps = math.floor(_snap(t / self.period))
        return self._scale * (self.burst_packets + self.packets_per_period * steps)

    def lower_pseudo_inverse(self, k: float) -> float:
        kk = k / self._scale
        if kk <= self.burst_packets:
            return 0.0
        if self.packets_per_period == 0:
            return INF
        m = math.ceil(_snap((kk - self.burst_packets) / self.packets_per_period))
        return m * self.period

    def upper_pseudo_inverse(self, k: float) -> float:
        kk = k / self._scale
        if kk < self.burst_packets:
            return 0.0
        if self.packets_per_period == 0:
            return INF
        m = math.floor(_snap((kk - self.burst_packets) / self.packets_per_period)) + 1
        return m * self.period

    def breakpoints(self, until: float) -> list[float]:
        count = int(math.floor(_snap(until / self.period)))
        return [i * self.period for i in range(count + 1)]

    def upper_affine(self) -> tuple[float, float]:
        return (self._scale * self.burst_packets, self._scale * self.packets_per_period / self.period)

    def lower_affine(self) -> tuple[float, float]:
        n = self.packets_per_period
        if n == 0:
            return (0.0, 0.0)
        latency = max(0.0, self.period * (1.0 - self.burst_packets / n))
        return (self._scale * n / self.period, latency)


@dataclass(frozen=True)
class Shifted(Curve):
    """``t -> inner(scale * t + shift)``, with the inner curve read as 0 for
    non-positive arguments.

    A positive ``shift`` moves the curve left (more data in short windows),
    which is how a jitter ``V`` inflates an arrival curve.
    """

    inner: Curve
    shift: float
    scale: float = 1.0
    unit: str = field(init=False)

    def __post_init__(self) -> None:
        if self.scale <= 0:
            raise DomainError("time scale must be positive")
        object.__setattr__(self, "unit", self.inner.unit)

    def _arg(self, t: float) -> float:
        return self.scale * t + self.shift

    def _value(self, t: float) -> float:
        x = self._arg(t)
        return self.inner.eval(x) if x > 0 else 0.0

    def eval_right(self, t: float) -> float:
        _check_t(t)
        x = self._arg(t)
        return self.inner.eval_right(x) if x >= 0 else 0.0

    def _invert(self, u: float) -> float:
        if math.isinf(u):
            return INF
        return max(0.0, (u - self.shift) / self.scale)

    def lower_pseudo_inverse(self, k: float) -> float:
        if k <= 0:
            return 0.0
        return self._invert(self.inner.lower_pseudo_inverse(k))

    def upper_pseudo_inverse(self, k: float) -> float:
        if k < 0:
            return 0.0
        return self._invert(self.inner.upper_pseudo_inverse(k))

    def breakpoints(self, until: float) -> list[float]:
        points = {0.0}
        start = -self.shift / self.scale
        if 0 < start <= until:
            points.add(start)
        reach = self._arg(until)
        if reach >= 0:
            for u in self.inner.breakpoints(reach):
                t = (u - self.shift) / self.scale
                if 0 <= t <= until:
                    points.add(t)
        return sorted(points)

    def upper_affine(self) -> tuple[float, float]:
        burst, rate = self.inner.upper_affine()
        return (burst + rate * max(self.shift, 0.0), rate * self.scale)

    def lower_affine(self) -> tuple[float, float]:
        rate, latency = self.inner.lower_affine()
        return (rate * self.scale, max(0.0, (latency - self.shift) / self.scale))


def _same_unit(curves: Iterable[Curve]) -> str:
    units = {c.unit for c in curves}
    if len(units) > 1:
        raise DomainError(f"cannot combine curves with different units: {sorted(units)}")
    return units.pop() if units else "bytes"


@dataclass(frozen=True)
class Min(Curve):
    """Pointwise minimum of two curves."""

    left: Curve
    right: Curve
    unit: str = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "unit", _same_unit((self.left, self.right)))

    def _value(self, t: float) -> float:
        return min(self.left.eval(t), self.right.eval(t))

    def eval_right(self, t: float) -> float:
        return min(self.left.eval_right(t), self.right.eval_right(t))

    def lower_pseudo_inverse(self, k: float) -> float:
        return max(self.left.lower_pseudo_inverse(k), self.right.lower_pseudo_inverse(k))

    def upper_pseudo_inverse(self, k: float) -> float:
        return max(self.left.upper_pseudo_inverse(k), self.right.upper_pseudo_inverse(k))

    def breakpoints(self, until: float) -> list[float]:
        base = sorted(set(self.left.breakpoints(until)) | set(self.right.breakpoints(until)) | {until})
        points = set(base)
        # Inside each interval both children are affine, so their difference
        # changes sign at most once; that crossing is a kink of the minimum.
        for a, b in zip(base, base[1:]):
            if b <= a:
                continue
            da = self.left.eval_right(a) - self.right.eval_right(a)
            db = self.left.eval(b) - self.right.eval(b)
            if da * db < 0:
                points.add(a + (b - a) * da / (da - db))
        return sorted(p for p in points if p <= until)

    def upper_affine(self) -> tuple[float, float]:
        return min(self.left.upper_affine(), self.right.upper_affine(), key=lambda br: (br[1], br[0]))

    def lower_affine(self) -> tuple[float, float]:
        r1, t1 = self.left.lower_affine()
        r2, t2 = self.right.lower_affine()
        return (min(r1, r2), max(t1, t2))


@dataclass(frozen=True)
class Sum(Curve):
    """Pointwise sum of any number of curves (the aggregate of several flows).

    An empty sum is the zero curve of the given unit.
    """

    terms: tuple[Curve, ...]
    unit: str = "bytes"

    def __post_init__(self) -> None:
        object.__setattr__(self, "terms", tuple(self.terms))
        if self.terms:
            object.__setattr__(self, "unit", _same_unit(self.terms))
        _check_unit(self.unit)

    def _value(self, t: float) -> float:
        return math.fsum(c.eval(t) for c in self.terms)

    def eval_right(self, t: float) -> float:
        _check_t(t)
        return math.fsum(c.eval_right(t) for c in self.terms)

    def breakpoints(self, until: float) -> list[float]:
        points = {0.0}
        for c in self.terms:
            points.update(c.breakpoints(until))
        return sorted(points)

    def upper_affine(self) -> tuple[float, float]:
        parts = [c.upper_affine() for c in self.terms]
        return (math.fsum(p[0] for p in parts), math.fsum(p[1] for p in parts))

    def lower_affine(self) -> tuple[float, float]:
        parts = [c.lower_affine() for c in self.terms]
        if not parts:
            return (0.0, 0.0)
        return (math.fsum(p[0] for p in parts), max(p[1] for p in parts))


def _generic_inverse(curve: Curve, k: float, strict: bool) -> float:
    """Walk the breakpoints of ``curve`` to find the first time it reaches ``k``."""
    if k < 0 or (k == 0 and not strict):
        return 0.0

    def reached(v: float) -> bool:
        return v > k if strict else v >= k

    rate, latency = curve.lower_affine()
    if rate > 0:
        horizon = latency + k / rate
        horizon = horizon * (1 + 1e-9) + 1e-15
        rounds = 2
    else:
        horizon = 1.0
        rounds = 60
    for _ in range(rounds):
        points = sorted(set(curve.breakpoints(horizon)) | {horizon})
        for a, b in zip(points, points[1:]):
            va = curve.eval_right(a)
            if reached(va):
                return a
            vb = curve.eval(b)
            if reached(vb) or (strict and vb == k and vb > va):
                if vb == va:
                    return b
                return a + (b - a) * (k - va) / (vb - va)
        if reached(curve.eval_right(horizon)):
            return horizon
        horizon *= 2
    return INF


# -- module-level operations ------------------------------------------------


def evaluate(curve: Curve, t: float) -> float:
    """Evaluate ``curve`` at ``t >= 0``."""
    return curve.eval(t)


def lower_pseudo_inverse(curve: Curve, k: float) -> float:
    """``inf {t >= 0 | curve(t) >= k}``."""
    if k < 0:
        raise DomainError(f"pseudo-inverse needs k >= 0, got {k!r}")
    return curve.lower_pseudo_inverse(k)


def pointwise_min(*curves: Curve) -> Curve:
    """Left-folded :class:`Min` of one or more curves."""
    if not curves:
        raise DomainError("pointwise_min needs at least one curve")
    out = curves[0]
    for c in curves[1:]:
        out = Min(out, c)
    return out


def shift_left(curve: Curve, v: float) -> Curve:
    """``t -> curve(t + v)``; closed form for leaky buckets."""
    if v < 0:
        raise DomainError("shift must be non-negative")
    if v == 0:
        return curve
    if isinstance(curve, LeakyBucket):
        return LeakyBucket(curve.rate, curve.burst + curve.rate * v, curve.unit)
    if isinstance(curve, Shifted) and curve.scale == 1.0:
        return Shifted(curve.inner, curve.shift + v)
    return Shifted(curve, v)


def horizontal_deviation(arrival: Curve, service: Curve) -> float:
    """Worst-case delay of ``arrival`` through ``service``.

    Returns ``sup_t inf {d >= 0 : arrival(t) <= service(t + d)}`` and ``inf``
    when the arrival's long-term rate exceeds the service's.  Service curves
    are assumed continuous past their initial latency (rate-latency, leaky
    bucket and their minimums are).
    """
    if arrival.unit != service.unit:
        raise DomainError(f"unit mismatch: arrival in {arrival.unit}, service in {service.unit}")
    if isinstance(arrival, LeakyBucket) and isinstance(service, RateLatency):
        if arrival.rate > service.rate:
            return INF
        if arrival.burst == 0 and arrival.rate == 0:
            return 0.0
        return service.latency + arrival.burst / service.rate

    sigma, rho = arrival.upper_affine()
    srate, slat = service.lower_affine()
    if rho > srate:
        return INF
    if sigma == 0 and rho == 0:
        return 0.0

    best = 0.0
    horizon = max(slat, 1e-9)
    for _ in range(80):
        best = max(best, _deviation_on(arrival, service, horizon))
        if rho < srate:
            needed = (slat + sigma / srate - best) / (1.0 - rho / srate)
            if needed <= horizon:
                return best
            horizon = max(2 * horizon, needed * (1 + 1e-9))
        else:
            horizon *= 2
    return best


def _deviation_on(arrival: Curve, service: Curve, horizon: float) -> float:
    cands = set(arrival.breakpoints(horizon)) | {horizon}
    top = arrival.eval_right(horizon)
    s_reach = service.lower_pseudo_inverse(top)
    if math.isinf(s_reach):
        s_reach = horizon
    for b in service.breakpoints(s_reach):
        for level in (service.eval(b) if b > 0 else 0.0, service.eval_right(b)):
            t = arrival.lower_pseudo_inverse(level)
            if 0 <= t <= horizon:
                cands.add(t)
    points = sorted(cands)
    best = 0.0
    for i, t in enumerate(points):
        if t > 0:
            x = arrival.eval(t)
            if x > 0:
                best = max(best, service.lower_pseudo_inverse(x) - t)
        x = arrival.eval_right(t)
        if x > 0:
            best = max(best, service.lower_pseudo_inverse(x) - t)
        elif i + 1 < len(points):
            # Arrivals start right after t: the service's initial flat part counts.
            mid = 0.5 * (t + points[i + 1])
            if arrival.eval(mid) > 0:
                best = max(best, service.upper_pseudo_inverse(0.0) - t)
    return best
