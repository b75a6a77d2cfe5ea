"""Packet entry traces that conform to a per-packet arrival curve.

Times are integer picoseconds of TAI.  Curves keep their natural time axis
in seconds; conversion happens here.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

import numpy as np

from ..curves import Curve, LeakyBucket, PacketStaircase
from ..errors import ConfigError

PS = 10**12

SOURCE_KINDS = ("periodic", "back_to_back", "greedy", "bounded_random")


@dataclass(frozen=True)
class SourceSpec:
    """How packets enter the block.

    ``periodic``
        one packet every ``period`` seconds;
    ``back_to_back``
        packets spaced by ``spacing`` seconds (a transmission time), then
        throttled by ``alpha``;
    ``greedy``
        every packet as early as ``alpha`` allows;
    ``bounded_random``
        exponential gaps with mean ``period``, throttled by ``alpha``.
    """

    kind: str = "periodic"
    packets: int = 1000
    period: float = 125e-6
    spacing: float = 0.0
    alpha: Curve | None = None

    def __post_init__(self) -> None:
        if self.kind not in SOURCE_KINDS:
            raise ConfigError(f"unknown source kind {self.kind!r}; choose from {SOURCE_KINDS}")
        if self.packets < 0:
            raise ConfigError("packet count must be >= 0")
        if self.period < 0 or self.spacing < 0:
            raise ConfigError("source period and spacing must be >= 0")
        if self.alpha is not None and self.alpha.unit != "packets":
            raise ConfigError("source arrival curve must count packets")
        if self.kind in ("greedy", "back_to_back", "bounded_random") and self.alpha is None:
            raise ConfigError(f"{self.kind} source needs an arrival curve")


def _ps(x: float) -> int:
    return int(round(x * PS))


def _shape_leaky_bucket(candidates: list[int], lb: LeakyBucket) -> list[int]:
    """Token-bucket shaper: delay each candidate until a whole token is present."""
    if lb.burst < 1:
        raise ConfigError("a packet leaky bucket needs a burst of at least one packet")
    rate = lb.rate / PS  # tokens per ps
    tokens = float(lb.burst)
    last = None
    out = []
    for c in candidates:
        t = c if last is None or c > last else last
        if last is not None:
            tokens = min(lb.burst, tokens + rate * (t - last))
        if tokens < 1:
            if rate == 0:
                break
            wait = math.ceil((1 - tokens) / rate)
            t += wait
            tokens = min(lb.burst, tokens + rate * wait)
        tokens -= 1
        out.append(t)
        last = t
    return out


def _shape_staircase(candidates: list[int], st: PacketStaircase) -> list[int]:
    """Place packets in batches on the period grid.

    The first batch may hold ``burst_packets``, later ones
    ``packets_per_period``; such traces conform whenever the burst is at
    least one period's worth.
    """
    if st.burst_packets < st.packets_per_period or st.burst_packets < 1:
        raise ConfigError("staircase sources need burst_packets >= max(1, packets_per_period)")
    period = _ps(st.period)
    out: list[int] = []
    slot, used, cap = None, 0, int(st.burst_packets)
    for c in candidates:
        k = -(-c // period)  # first grid point at or after c
        if slot is None:
            slot = k
        elif k > slot:
            slot, used, cap = k, 0, int(st.packets_per_period)
        if used >= cap:
            if st.packets_per_period < 1:
                break
            slot, used, cap = slot + 1, 0, int(st.packets_per_period)
        out.append(slot * period)
        used += 1
    return out


def shape(candidates: list[int], alpha: Curve) -> list[int]:
    if isinstance(alpha, LeakyBucket):
        return _shape_leaky_bucket(candidates, alpha)
    if isinstance(alpha, PacketStaircase):
        return _shape_staircase(candidates, alpha)
    raise ConfigError(f"source shaping supports LeakyBucket and PacketStaircase, not {type(alpha).__name__}")


def generate(spec: SourceSpec, rng: random.Random) -> np.ndarray:
    """Entry instants (int64 ps, non-decreasing) for one trial."""
    n = spec.packets
    if spec.kind == "periodic":
        times = [i * _ps(spec.period) for i in range(n)]
    elif spec.kind == "greedy":
        times = shape([0] * n, spec.alpha)
    elif spec.kind == "back_to_back":
        times = shape([i * _ps(spec.spacing) for i in range(n)], spec.alpha)
    else:
        t, cand = 0.0, []
        mean = spec.period * PS
        for _ in range(n):
            cand.append(int(t))
            t += rng.expovariate(1 / mean) if mean > 0 else 0.0
        times = shape(cand, spec.alpha)
    arr = np.asarray(times, dtype=np.int64)
    if spec.alpha is not None and not conforms(arr, spec.alpha):
        raise ConfigError("generated source trace violates its arrival curve")
    return arr


def conforms(times: np.ndarray, alpha: Curve, max_lags: int = 20_000) -> bool:
    """Whether every window of the trace respects ``alpha``.

    ``k`` packets spanning ``s`` conform when ``k <= alpha(s+)``, i.e. when
    ``s`` is at least the lower pseudo-inverse of ``alpha`` at ``k``.
    """
    a = np.asarray(times, dtype=np.int64)
    n = len(a)
    if n == 0:
        return True
    if np.any(np.diff(a) < 0):
        return False
    if isinstance(alpha, LeakyBucket):
        return _leaky_bucket_conforms(a, alpha)
    if isinstance(alpha, PacketStaircase) and _on_staircase_grid(a, alpha):
        return True
    if n - 1 > max_lags:
        raise ConfigError(f"cannot verify conformance of {n} packets against {type(alpha).__name__}")
    for lag in range(1, n):
        need = alpha.lower_pseudo_inverse(lag + 1)
        if math.isinf(need):
            return False
        if np.any(a[lag:] - a[:-lag] < need * PS - 0.5):
            return False
    return alpha.lower_pseudo_inverse(1) == 0


def _leaky_bucket_conforms(a: np.ndarray, lb: LeakyBucket) -> bool:
    rate = lb.rate / PS
    tokens = float(lb.burst)
    last = int(a[0])
    for t in a.tolist():
        tokens = min(lb.burst, tokens + rate * (t - last))
        last = t
        if tokens < 1 - 1e-9:
            return False
        tokens -= 1
    return True


def _on_staircase_grid(a: np.ndarray, st: PacketStaircase) -> bool:
    period = _ps(st.period)
    if period == 0 or np.any(a % period):
        return False
    slots, counts = np.unique(a // period, return_counts=True)
    if counts[0] > st.burst_packets:
        return False
    return bool(np.all(counts[1:] <= st.packets_per_period)) and st.burst_packets >= st.packets_per_period
