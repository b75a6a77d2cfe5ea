"""Random blocks and simulation settings for soundness and tightness sweeps."""

from __future__ import annotations

import math
import random

from ..bounds import BdsSpec, Block, JcsSpec
from ..clocks import ClockModel
from ..curves import LeakyBucket, PacketStaircase
from ..dampers import DamperSpec, fopleq, head_of_line, ideal, rcsp, rgcq, sced_plus
from .engine import SimConfig
from .sources import SourceSpec

VARIANTS = ("ideal", "rcsp", "rgcq", "fopleq", "sced_plus", "hol", "hol_zero")


def random_clock(rng: random.Random, synchronized: bool | None = None) -> ClockModel:
    rho = 1 + rng.choice([0.0, 1e-5, 1e-4, 2e-4])
    eta = rng.choice([0.0, 1e-9, 2e-9, 5e-9])
    if synchronized is None:
        synchronized = rng.random() < 0.5
    omega = rng.choice([20e-9, 100e-9, 1e-6]) if synchronized else math.inf
    return ClockModel(rho, eta, omega)


def random_damper(rng: random.Random, variant: str) -> DamperSpec:
    g = rng.choice([100e-9, 500e-9, 1e-6])
    eps = rng.choice([0.0, 2e-9, 10e-9])
    if variant == "ideal":
        return ideal()
    if variant == "rcsp":
        return rcsp(g, eps)
    if variant == "rgcq":
        return rgcq(g, eps)
    if variant == "fopleq":
        return fopleq(g, eps)
    if variant == "sced_plus":
        return sced_plus(g, eps)
    if variant == "hol_zero":
        return head_of_line(0.0, 0.0, eps, eps)
    phi_max = rng.choice([1e-9, 5e-9, 20e-9])
    return head_of_line(rng.uniform(0, phi_max), phi_max, eps, rng.choice([0.0, 2e-9, 1e-6]))


def random_block(rng: random.Random, variant: str | None = None, clock: ClockModel | None = None,
                 allow_non_fifo: bool = True, allow_shared_clocks: bool = True) -> Block:
    """A block of 1 to 4 elements with at least one JCS."""
    variant = variant or rng.choice(VARIANTS)
    clock = clock or random_clock(rng)
    count = rng.randint(1, 4)
    elements = []
    for i in range(count):
        if i == 0 or rng.random() < 0.65:
            delta = rng.uniform(1e-6, 300e-6)
            elements.append(JcsSpec(
                delta=delta,
                epsilon=rng.choice([0.0, 10e-9, 50e-9]),
                fifo=not (allow_non_fifo and rng.random() < 0.3),
                clock_id=f"c{i}",
                delta_min=rng.uniform(0, delta / 2) if rng.random() < 0.5 else 0.0,
            ))
        else:
            lo = rng.uniform(0, 50e-6)
            hi = lo + rng.choice([0.0, rng.uniform(0, 10e-6)])
            nu = None if rng.random() < 0.7 else (hi - lo) * rng.random()
            elements.append(BdsSpec(lo, hi, nu, fifo=not (allow_non_fifo and rng.random() < 0.3)))
    distinct = None
    if allow_shared_clocks and rng.random() < 0.3:
        # Adjacent JCSs in one device may share a clock.
        shared = []
        for i, e in enumerate(elements):
            if i and isinstance(e, JcsSpec) and isinstance(elements[i - 1], JcsSpec) and rng.random() < 0.7:
                e = JcsSpec(e.delta, e.epsilon, e.fifo, elements[i - 1].clock_id, e.delta_min)
            shared.append(e)
        elements = shared
        distinct = len({e.clock_id for e in elements if isinstance(e, JcsSpec)})
    return Block(elements, random_damper(rng, variant), clock, distinct_clock_count=distinct)


def random_source(rng: random.Random, packets: int) -> SourceSpec:
    period = rng.uniform(5e-6, 200e-6)
    if rng.random() < 0.5:
        alpha = LeakyBucket(1 / period, rng.randint(1, 10), unit="packets")
    else:
        n = rng.randint(1, 5)
        alpha = PacketStaircase(rng.randint(n, 3 * n), period * n, n)
    kind = rng.choice(["greedy", "bounded_random", "back_to_back"])
    return SourceSpec(kind, packets, period, spacing=rng.uniform(0, 2e-6), alpha=alpha)


def random_sim_config(rng: random.Random, packets: int = 1000, variant: str | None = None) -> SimConfig:
    block = random_block(rng, variant)
    modes: str | tuple[str, ...] = "random"
    if not block.clock.synchronized and rng.random() < 0.3:
        mode = rng.choice(["fast_adversarial", "slow_adversarial"])
        modes = tuple([mode] * (len(block.elements) + 1))
    return SimConfig(
        block,
        random_source(rng, packets),
        clock_modes=modes,
        clock_segment=rng.choice([5e-6, 50e-6, 1e-3]),
        jcs_policy=rng.choice(["uniform", "extremes", "max"]),
        header_error=rng.choice(["random", "plus", "minus"]),
        release_policy=rng.choice(["random", "latest", "earliest"]),
        seed=rng.getrandbits(32),
    )
