"""Reordering experiments for dampers with tolerances, and the head-of-line
equivalence check.

Clock wording follows the damper literature: a *faster* clock measures a
given TAI interval as *shorter* (it needs more TAI per local unit, like
the ``fast_adversarial`` trajectory).
"""

from __future__ import annotations

import random
from typing import Sequence

from ..bounds import Block, JcsSpec
from ..clocks import ClockModel, ClockTrajectory, RandomTrajectory, preset, sample_trajectory
from ..dampers import from_tolerances, fifo_queue, hol_release, resequence_release
from ..errors import ConfigError
from .engine import SimConfig, simulate_block, trial_seed
from .sources import SourceSpec

CLOCK_PAIR_MODES = ("symmetric", "downstream_slower", "downstream_faster")
E_TRAN_MODES = ("uniform", "adversarial", "fixed")


class _ClockPair:
    """Upstream clock ``H0`` (JCS) and downstream clock ``H1`` (damper)."""

    def __init__(self, clock: ClockModel, mode: str, seed: int, segment: float):
        if mode not in CLOCK_PAIR_MODES:
            raise ConfigError(f"unknown clock pair mode {mode!r}; choose from {CLOCK_PAIR_MODES}")
        self.h0: ClockTrajectory = RandomTrajectory(clock, seed * 2 + 1, segment)
        if mode == "symmetric":
            self.h1: ClockTrajectory = RandomTrajectory(clock, seed * 2 + 2, segment)
        elif mode == "downstream_slower":
            self.h1 = sample_trajectory(clock, mode="slow_adversarial")
        else:
            self.h1 = sample_trajectory(clock, mode="fast_adversarial")


def _rgcq_trial(pair: _ClockPair, t0: float, tau_local: float, e_tran: float, prop: float) -> bool:
    """One instance of the back-to-back construction; True when packets swap.

    Packet 2's transmission lasts ``tau_local`` on ``H0``; the damper sees
    the same TAI interval on ``H1``.  With ``e_tran`` the error of the
    inferred transmission time (actual minus inferred), the theoretical
    eligibility times differ by ``e_tran + (tau_H1 - tau_H0)``.
    """
    tau_tai = pair.h0.tai_elapsed(t0, tau_local)
    start = t0 + prop
    tau_h1 = pair.h1.local_elapsed(start, start + tau_tai)
    return e_tran + (tau_h1 - tau_local) < 0


def rgcq_reorder_experiment(tau_local: float, e_tran_bound: float, clock_pair_mode: str = "symmetric",
                            trials: int = 10_000, *, e_tran_mode: str = "uniform",
                            clock: ClockModel | None = None, seed: int = 0,
                            prop_delay: float = 5e-6) -> float:
    """Fraction of trials in which packet 2 becomes eligible before packet 1.

    ``e_tran_mode`` sets the transmission-time inference error per trial:
    ``uniform`` in ``[-b, b]``, ``adversarial`` fixed at ``-|b|``, or
    ``fixed`` at ``b`` itself (``b = e_tran_bound``).  ``symmetric`` draws
    both clocks independently from the same random model; the other modes
    pin the damper clock at one extreme of the drift envelope.
    """
    if e_tran_mode not in E_TRAN_MODES:
        raise ConfigError(f"unknown e_tran mode {e_tran_mode!r}; choose from {E_TRAN_MODES}")
    if tau_local <= 0 or trials < 1:
        raise ConfigError("rgcq_reorder_experiment needs tau_local > 0 and trials >= 1")
    clock = clock or preset("free_running")
    if clock.rho == 1:
        raise ConfigError("identical clock rates never reorder; use rho > 1")
    segment = 4 * tau_local
    pair = _ClockPair(clock, clock_pair_mode, seed, segment)
    rng = random.Random(trial_seed(seed, 0, 7))
    horizon = 3 * segment * trials
    hits = 0
    b = abs(e_tran_bound)
    for _ in range(trials):
        if e_tran_mode == "uniform":
            e_tran = rng.uniform(-b, b)
        elif e_tran_mode == "adversarial":
            e_tran = -b
        else:
            e_tran = e_tran_bound
        hits += _rgcq_trial(pair, rng.uniform(0, horizon), tau_local, e_tran, prop_delay)
    return hits / trials


def rcsp_backtoback_experiment(tau_tai: float, delta_l: float, trials: int = 10_000, *,
                               epsilon: float = 2e-9, router_delta: float = 5e-6,
                               tx_time: float = 1e-6, clock: ClockModel | None = None,
                               seed: int = 0) -> dict:
    """Probability that two packets spaced by ``tau_tai`` leave an RCSP together,
    and that they are then swapped by the next damper.

    Each trial simulates a router (JCS with delay bound ``router_delta``)
    followed by an RCSP with tolerances ``(delta_l, epsilon)`` whose slot grid
    has a uniformly random phase.  Packets released in the same slot leave
    back to back; whether the next damper swaps them is decided by one
    instance of the RGCQ construction with transmission time ``tx_time``.
    """
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    if delta_l <= epsilon:
        raise ConfigError("delta_l must exceed epsilon to leave room for a slot grid")
    clock = clock or preset("free_running")
    block = Block([JcsSpec(router_delta, epsilon)], from_tolerances("rcsp", delta_l, epsilon), clock)
    pair = _ClockPair(clock, "symmetric", seed + 1, 4 * tx_time)
    rng = random.Random(trial_seed(seed, 0, 11))
    cfg = SimConfig(block, SourceSpec("periodic", packets=2, period=tau_tai), seed=seed,
                    clock_segment=router_delta * 4, trials=trials)
    elig = simulate_block(cfg, check=False).eligibility_local.reshape(trials, 2)
    together = swapped = 0
    for e1, e2 in elig.tolist():
        if e1 == e2:
            together += 1
            swapped += _rgcq_trial(pair, rng.uniform(0, 3 * tx_time * trials), tx_time, 0.0, 5e-6)
    return {"p_backtoback": together / trials, "p_reorder": swapped / trials}


def random_hol_trace(rng: random.Random, length: int, phi_min: int = 0, phi_max: int = 5_000,
                     spread: int = 1_000_000) -> list[tuple[int, int]]:
    """Random ``(tentative_eligibility_ps, processing_ps)`` pairs."""
    t, out = 0, []
    for _ in range(length):
        t += rng.randint(0, spread)
        out.append((t + rng.randint(-spread, spread), rng.randint(phi_min, phi_max)))
    return out


def hol_equivalence_check(trace: Sequence[tuple[int, int]]) -> bool:
    """Whether a head-of-line damper equals a re-sequencing damper followed by
    a FIFO queue, on this trace (exact integer comparison)."""
    tentatives = [e for e, _ in trace]
    processing = [p for _, p in trace]
    direct = hol_release(tentatives, processing)
    composed = fifo_queue(resequence_release(tentatives), processing)
    return direct == composed
