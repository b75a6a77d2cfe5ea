import math
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from damperkit.clocks import (
    PERFECT,
    ClockModel,
    arrival_curve_to_tai,
    delay_deviation_bounds,
    preset,
    sample_trajectory,
)
from damperkit.curves import LeakyBucket, Min, PacketStaircase, Shifted
from damperkit.errors import ConfigError, DomainError
from damperkit.sim.sources import PS, SourceSpec, generate

US, NS = 1e-6, 1e-9
TSN = dict(rho=1 + 1e-4, eta=2 * NS)


class TestDeviationBounds:
    def test_free_running(self):
        iv = delay_deviation_bounds(250 * US, ClockModel(**TSN))
        assert iv.hi == pytest.approx(27 * NS, rel=1e-9)
        rho, eta = TSN["rho"], TSN["eta"]
        assert iv.lo == pytest.approx(-((1 - 1 / rho) * 250 * US + eta / rho), rel=1e-12)
        # The reference example quotes "about -26.9997 ns"; the formula gives -26.9973 ns.
        assert iv.lo == pytest.approx(-26.9997 * NS, abs=0.01 * NS)

    def test_gptp_keeps_drift_branch(self):
        iv = delay_deviation_bounds(250 * US, ClockModel(**TSN, omega=1 * US))
        assert iv.hi == pytest.approx(27 * NS, rel=1e-9)

    def test_tight_sync_collapses(self):
        iv = delay_deviation_bounds(250 * US, ClockModel(**TSN, omega=1e-18))
        assert iv.hi == pytest.approx(0, abs=1e-17)
        assert iv.lo == pytest.approx(0, abs=1e-17)

    def test_negative_duration(self):
        with pytest.raises(DomainError):
            delay_deviation_bounds(-1, PERFECT)


class TestArrivalCurveToTai:
    def test_identity_clock(self):
        alpha = LeakyBucket(2e6, 10_000)
        assert arrival_curve_to_tai(alpha, ClockModel(1.0, 0.0, 1e-9)) is alpha

    def test_free_running_leaky_bucket(self):
        out = arrival_curve_to_tai(LeakyBucket(2e6, 10_000), ClockModel(**TSN))
        assert out.rate == pytest.approx(2e6 * (1 + 1e-4))
        assert out.burst == pytest.approx(10_000 + 2e6 * 2 * NS)

    def test_gptp_leaky_bucket_both_branches(self):
        clock = ClockModel(**TSN, omega=1 * US)
        alpha = LeakyBucket(2e6, 10_000)
        out = arrival_curve_to_tai(alpha, clock)
        assert isinstance(out, Min)
        for t in np.linspace(1e-9, 1e-1, 200):
            direct = alpha.eval(min(clock.rho * t + clock.eta, t + 2 * clock.omega))
            assert out.eval(t) == pytest.approx(direct, rel=1e-12)

    def test_staircase_is_rescaled(self):
        out = arrival_curve_to_tai(PacketStaircase(10, 8e-3, 10), ClockModel(**TSN))
        assert isinstance(out, Shifted)


class TestTrajectories:
    def test_fast_adversarial(self):
        traj = sample_trajectory(ClockModel(**TSN), mode="fast_adversarial")
        assert traj.tai_elapsed(0.0, 100 * US) == pytest.approx(100.012 * US, rel=1e-12)

    def test_sync_adversarial_fast(self):
        traj = sample_trajectory(ClockModel(**TSN, omega=1 * US), mode="sync_adversarial_fast")
        assert traj.tai_elapsed(0.0, 100 * US) == pytest.approx(102 * US, rel=1e-12)

    def test_random_perfect_clock_is_identity(self):
        traj = sample_trajectory(PERFECT, seed=3)
        for t in (0.0, 1e-6, 0.5, 3.25):
            assert traj.local(t) == t
            assert traj.tai(t) == t

    def test_exact_mode_uses_fractions(self):
        traj = sample_trajectory(ClockModel(**TSN), mode="fast_adversarial", exact=True)
        assert isinstance(traj.tai_elapsed(0, Fraction(1, 10_000)), Fraction)

    def test_sync_mode_needs_finite_omega(self):
        with pytest.raises(ConfigError):
            sample_trajectory(ClockModel(**TSN), mode="sync_adversarial_slow")

    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            sample_trajectory(PERFECT, mode="sideways")

    def test_presets(self):
        assert preset("gptp").omega == 1 * US
        assert preset("white_rabbit").omega == pytest.approx(100 * NS)
        assert preset("ntp").omega == 100e-3
        assert math.isinf(preset("free_running").omega)
        with pytest.raises(ConfigError):
            preset("sundial")


# -- invariants -----------------------------------------------------------------------


@pytest.mark.invariant
@pytest.mark.parametrize("name", ["free_running", "gptp", "white_rabbit"])
def test_realized_deviation_inside_envelope(name):
    clock = preset(name)
    rng = random.Random(name)
    for seed in range(8):
        traj = sample_trajectory(clock, seed=seed, segment=rng.choice([1e-6, 1e-4, 1e-2]))
        for _ in range(300):
            s = rng.uniform(0, 0.2)
            t = s + rng.expovariate(1 / rng.choice([1e-6, 1e-4, 1e-2]))
            d_local = traj.local(t) - traj.local(s)
            lo, hi = delay_deviation_bounds(d_local, clock)
            dev = (t - s) - d_local
            slack = 1e-15 * max(1.0, t)
            assert lo - slack <= dev <= hi + slack


@pytest.mark.invariant
@settings(max_examples=25, deadline=None)
@given(
    st.sampled_from(["free_running", "gptp", "white_rabbit"]),
    st.integers(0, 2**32),
    st.sampled_from(["lb", "stair"]),
)
def test_tai_arrival_curve_dominates_trace(name, seed, kind):
    clock = preset(name)
    if kind == "lb":
        alpha = LeakyBucket(1 / 20e-6, 4, unit="packets")
    else:
        alpha = PacketStaircase(4, 80e-6, 4)
    local_ps = generate(SourceSpec("greedy", 120, alpha=alpha), random.Random(seed))
    traj = sample_trajectory(clock, seed=seed, segment=30e-6)
    tai = [traj.tai(x / PS) for x in local_ps.tolist()]
    out = arrival_curve_to_tai(alpha, clock)
    for i in range(len(tai)):
        for j in range(i, len(tai)):
            # j - i + 1 packets inside the closed window [tai_i, tai_j]
            assert j - i + 1 <= out.eval_right(tai[j] - tai[i] + 2e-12) + 1e-9
