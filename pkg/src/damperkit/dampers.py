"""Damper eligibility-time laws and damper-header computation.

A damper holds each packet until its *eligibility time*.  With ``Q`` the
arrival time at the damper (damper clock) and ``H`` the accumulated
earliness carried in the packet header, the theoretical eligibility time is
``Q + H``.  Real dampers deviate from it:

* tolerance dampers release within ``[Q + H - delta_l, Q + H + delta_u]``
  (RCSP rounds down onto a grid, RGCQ rounds up);
* re-sequencing dampers additionally never release a packet before the one
  that arrived ahead of it (SCED+, FOPLEQ);
* head-of-line dampers serve a FIFO queue whose head waits for its
  eligibility time and then takes a processing time ``phi``.

All functions here are pure and accept ints (picoseconds), floats or
fractions alike.
"""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError, DomainError, InfeasibleError


class Variant(str, enum.Enum):
    IDEAL = "ideal"
    TOLERANCE = "tolerance"
    RESEQUENCING = "resequencing"
    HEAD_OF_LINE = "head_of_line"


class HeaderMode(str, enum.Enum):
    DEFAULT = "default"
    TE_STAMPING = "te_stamping"


class Rounding(str, enum.Enum):
    NONE = "none"
    FLOOR = "floor"
    CEIL = "ceil"


@dataclass(frozen=True)
class DamperSpec:
    """Static description of one damper.

    ``delta_l`` and ``delta_u`` are the early and late tolerances around the
    theoretical eligibility time.  ``granularity`` is the calendar-queue
    slot length for rounding dampers.  ``phi_min``/``phi_max`` bound the
    per-packet processing time of head-of-line dampers.
    """

    variant: Variant = Variant.IDEAL
    delta_l: float = 0.0
    delta_u: float = 0.0
    granularity: float | None = None
    phi_min: float = 0.0
    phi_max: float = 0.0
    header_mode: HeaderMode = HeaderMode.DEFAULT
    rounding: Rounding = Rounding.NONE
    name: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "header_mode", HeaderMode(self.header_mode))
        object.__setattr__(self, "rounding", Rounding(self.rounding))
        if self.delta_l < 0 or self.delta_u < 0:
            raise ConfigError("damper tolerances must be non-negative")
        if self.variant is Variant.IDEAL and (self.delta_l or self.delta_u):
            raise ConfigError("an ideal damper has zero tolerances")
        if not 0 <= self.phi_min <= self.phi_max:
            raise ConfigError("processing bounds need 0 <= phi_min <= phi_max")
        if self.variant is not Variant.HEAD_OF_LINE and self.phi_max:
            raise ConfigError("processing bounds only apply to head-of-line dampers")
        if self.granularity is not None and self.granularity <= 0:
            raise ConfigError("granularity must be positive")
        if self.rounding is not Rounding.NONE and self.granularity is None:
            raise ConfigError("a rounding damper needs a granularity")

    @property
    def fifo(self) -> bool:
        """Whether the damper preserves its arrival order."""
        return self.variant in (Variant.RESEQUENCING, Variant.HEAD_OF_LINE)

    def with_header_mode(self, mode: HeaderMode | str) -> "DamperSpec":
        return replace(self, header_mode=HeaderMode(mode))


# -- presets ----------------------------------------------------------------


def ideal() -> DamperSpec:
    return DamperSpec(Variant.IDEAL, name="ideal")


def rcsp(granularity: float, epsilon: float, header_mode: HeaderMode | str = HeaderMode.DEFAULT) -> DamperSpec:
    """Calendar-queue damper rounding down: tolerances ``(granularity + eps, eps)``."""
    return DamperSpec(Variant.TOLERANCE, granularity + epsilon, epsilon, granularity,
                      header_mode=header_mode, rounding=Rounding.FLOOR, name="rcsp")


def rgcq(granularity: float, epsilon: float, header_mode: HeaderMode | str = HeaderMode.DEFAULT) -> DamperSpec:
    """Gate-control-queue damper rounding up: tolerances ``(eps, granularity + eps)``."""
    return DamperSpec(Variant.TOLERANCE, epsilon, granularity + epsilon, granularity,
                      header_mode=header_mode, rounding=Rounding.CEIL, name="rgcq")


def fopleq(granularity: float, epsilon: float, header_mode: HeaderMode | str = HeaderMode.DEFAULT) -> DamperSpec:
    """Order-preserving RGCQ extension; rounds down like RCSP."""
    return DamperSpec(Variant.RESEQUENCING, granularity + epsilon, epsilon, granularity,
                      header_mode=header_mode, rounding=Rounding.FLOOR, name="fopleq")


def sced_plus(granularity: float, epsilon: float, header_mode: HeaderMode | str = HeaderMode.DEFAULT) -> DamperSpec:
    """Re-sequencing damper with tolerances ``(granularity + eps, eps)``."""
    return DamperSpec(Variant.RESEQUENCING, granularity + epsilon, epsilon, granularity,
                      header_mode=header_mode, name="sced_plus")


def head_of_line(phi_min: float, phi_max: float, delta_l: float = 0.0, delta_u: float = 0.0,
                 header_mode: HeaderMode | str = HeaderMode.DEFAULT) -> DamperSpec:
    return DamperSpec(Variant.HEAD_OF_LINE, delta_l, delta_u, phi_min=phi_min, phi_max=phi_max,
                      header_mode=header_mode, name="hol")


def from_tolerances(preset: str, delta_l: float, delta_u: float,
                    header_mode: HeaderMode | str = HeaderMode.DEFAULT,
                    phi_min: float = 0.0, phi_max: float = 0.0) -> DamperSpec:
    """Build a preset from its advertised tolerances instead of ``(granularity, eps)``.

    For the rounding presets the granularity is the gap between the two
    tolerances, which leaves the residual error ``eps`` on the other side.
    """
    if preset == "ideal":
        return ideal()
    if preset == "hol":
        return head_of_line(phi_min, phi_max, delta_l, delta_u, header_mode)
    if preset in ("rcsp", "fopleq", "sced_plus"):
        eps, gran = delta_u, delta_l - delta_u
        factory = {"rcsp": rcsp, "fopleq": fopleq, "sced_plus": sced_plus}[preset]
    elif preset == "rgcq":
        eps, gran = delta_l, delta_u - delta_l
        factory = rgcq
    else:
        raise ConfigError(f"unknown damper preset {preset!r}")
    if gran <= 0:
        raise ConfigError(f"{preset} tolerances ({delta_l!r}, {delta_u!r}) leave no room for a granularity")
    return factory(gran, eps, header_mode)


# -- release laws -------------------------------------------------------------


def theoretical_eligibility(q_local, header):
    """Release time of an ideal damper."""
    return q_local + header


def _floor_div(x, g):
    return math.floor(x / g) if isinstance(x, float) or isinstance(g, float) else x // g


def quantize(e_tilde, spec: DamperSpec, phase=0):
    """Round ``e_tilde`` onto the damper's slot grid (origin ``phase``).

    >>> spec = rcsp(1.0, 0.0)
    >>> quantize(10.7, spec), quantize(10.7, replace(spec, rounding=Rounding.CEIL))
    (10.0, 11.0)
    """
    if spec.granularity is None:
        raise ConfigError("quantize needs a damper granularity")
    if spec.rounding is Rounding.NONE:
        raise ConfigError("quantize needs a rounding mode")
    g = spec.granularity
    x = e_tilde - phase
    if spec.rounding is Rounding.FLOOR:
        return phase + g * _floor_div(x, g)
    return phase - g * _floor_div(-x, g)


def rounding_error_range(spec: DamperSpec) -> tuple[float, float]:
    """Range of the extra error a rounding damper may add before rounding.

    The release ``quantize(e_tilde + u)`` stays inside the tolerances for any
    ``u`` in the returned range.
    """
    g = spec.granularity
    if spec.rounding is Rounding.FLOOR:
        lo, hi = g - spec.delta_l, spec.delta_u
    elif spec.rounding is Rounding.CEIL:
        lo, hi = -spec.delta_l, spec.delta_u - g
    else:
        lo, hi = -spec.delta_l, spec.delta_u
    if lo > hi:
        raise ConfigError("damper tolerances are narrower than its granularity")
    return lo, hi


def resequence_release(tentatives: Sequence) -> list:
    """Running maximum: no packet leaves before the one that arrived ahead."""
    out = []
    last = None
    for e in tentatives:
        last = e if last is None or e > last else last
        out.append(last)
    return out


def hol_release(tentatives: Sequence, processing: Sequence, phi_min=None, phi_max=None) -> list:
    """Head-of-line damper: ``E_n = max(Ebar_n, E_{n-1}) + phi_n``."""
    if len(tentatives) != len(processing):
        raise DomainError("one processing time per packet is required")
    out = []
    last = None
    for e, phi in zip(tentatives, processing):
        if (phi_min is not None and phi < phi_min) or (phi_max is not None and phi > phi_max) or phi < 0:
            raise DomainError(f"processing time {phi!r} outside [{phi_min!r}, {phi_max!r}]")
        start = e if last is None or e > last else last
        last = start + phi
        out.append(last)
    return out


def hol_closed_form(tentatives: Sequence[int], processing: Sequence[int]) -> np.ndarray:
    """``max_{m <= n} (Ebar_m + sum_{i=m..n} phi_i)`` on int64 arrays."""
    e = np.asarray(tentatives, dtype=np.int64)
    phi = np.asarray(processing, dtype=np.int64)
    s = np.cumsum(phi)
    before = s - phi  # sum of phi_i for i < m
    return np.maximum.accumulate(e - before) + s


def fifo_queue(inputs: Sequence, service: Sequence) -> list:
    """Single-server FIFO queue: ``O_n = max(I_n, O_{n-1}) + phi_n``."""
    out = []
    last = None
    for i, phi in zip(inputs, service):
        last = (i if last is None or i > last else last) + phi
        out.append(last)
    return out


def hol_decompose(a, x_min, x_max, y_min, y_max, z):
    """Find ``x`` in ``[x_min, x_max]`` and ``y`` in ``[y_min, y_max]`` with
    ``z = x + max(a, y)``.

    >>> hol_decompose(0, 0, 0, 2, 4, 3)
    (0, 3)
    """
    lower = x_min + max(a, y_min)
    upper = x_max + max(a, y_max)
    if not lower <= z <= upper:
        raise InfeasibleError(f"z={z!r} outside [{lower!r}, {upper!r}]")
    # m stands for max(a, y); it must leave x = z - m inside [x_min, x_max].
    lo = max(z - x_max, max(a, y_min))
    hi = min(z - x_min, max(a, y_max))
    if lo > hi:  # only reachable through rounding noise
        raise InfeasibleError("no witness within numeric tolerance")
    m = hi
    x = z - m
    if m > a:
        y = m
    else:
        # max(a, y) = a: any y up to a works; hug the side z sits on.
        y = min(y_max, a) if z == upper else y_min
    return x, y


# -- damper header ------------------------------------------------------------


def earliness(delta, a_ts_local, w_dhu_local, mode: HeaderMode | str = HeaderMode.DEFAULT,
              upstream: DamperSpec | None = None):
    """Earliness of a packet at a delay element with bound ``delta``.

    ``a_ts_local`` is the arrival stamp and ``w_dhu_local`` the departure
    stamp.  In TE time-stamping mode the arrival stamp is the upstream
    damper's theoretical eligibility time and the upstream late tolerance is
    credited back.
    """
    mode = HeaderMode(mode)
    if mode is HeaderMode.DEFAULT:
        return delta - (w_dhu_local - a_ts_local)
    if upstream is None:
        raise ConfigError("TE time-stamping needs the upstream damper")
    return delta + upstream.delta_u - (w_dhu_local - a_ts_local)


@dataclass(frozen=True)
class HeaderErrorBudget:
    """One packet's header error, split by cause."""

    epsilon: float
    e_update: float = 0.0
    e_ts: float = 0.0
    e_tran: float = 0.0
    e_acq: float = 0.0
    e_clk: float = 0.0

    @property
    def total(self):
        return self.e_update + self.e_ts + self.e_tran + self.e_acq + self.e_clk

    def within_bound(self) -> bool:
        return abs(self.total) <= self.epsilon


def sample_header_error(epsilon, rng: random.Random, mode: str = "random") -> HeaderErrorBudget:
    """Draw a header error with ``|e| <= epsilon``.

    ``mode`` is ``random`` (five independent components), ``plus``/``minus``
    (pinned at ``+-epsilon``) or ``zero``.  Integer ``epsilon`` yields integer
    components.
    """
    if mode == "zero" or epsilon == 0:
        return HeaderErrorBudget(epsilon)
    if mode == "plus":
        return HeaderErrorBudget(epsilon, e_update=epsilon)
    if mode == "minus":
        return HeaderErrorBudget(epsilon, e_update=-epsilon)
    if mode != "random":
        raise ConfigError(f"unknown header-error mode {mode!r}")
    if isinstance(epsilon, int):
        q = epsilon // 5
        parts = [rng.randint(-q, q) for _ in range(5)]
    else:
        q = epsilon / 5
        parts = [rng.uniform(-q, q) for _ in range(5)]
    return HeaderErrorBudget(epsilon, *parts)


def apply_header_error(true_increment, budget: HeaderErrorBudget):
    """Header increment as actually written: the true earliness plus the error."""
    return true_increment + budget.total


# -- envelope checks used by tests and the simulator ---------------------------


def in_tolerance_envelope(e_tilde, e, spec: DamperSpec, tol=0) -> bool:
    return e_tilde - spec.delta_l - tol <= e <= e_tilde + spec.delta_u + tol


def in_resequencing_envelope(e_tildes: Sequence, releases: Sequence, spec: DamperSpec, tol=0) -> bool:
    peak = None
    prev = None
    for et, e in zip(e_tildes, releases):
        peak = et if peak is None or et > peak else peak
        if not peak - spec.delta_l - tol <= e <= peak + spec.delta_u + tol:
            return False
        if prev is not None and e < prev:
            return False
        prev = e
    return True


def in_hol_envelope(e_tildes: Sequence, releases: Sequence, spec: DamperSpec, tol=0) -> bool:
    """Check ``max(Et_n - dL, E_{n-1}) + phi_min <= E_n <= max(Et_n + dU, E_{n-1}) + phi_max``.

    The first packet has no predecessor, so only the tolerance side applies
    before the processing time is added.
    """
    prev = None
    for et, e in zip(e_tildes, releases):
        low = et - spec.delta_l if prev is None else max(et - spec.delta_l, prev)
        high = et + spec.delta_u if prev is None else max(et + spec.delta_u, prev)
        if not low + spec.phi_min - tol <= e <= high + spec.phi_max + tol:
            return False
        prev = e
    return True
