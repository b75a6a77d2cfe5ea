import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from damperkit.curves import (
    LeakyBucket,
    Min,
    PacketStaircase,
    RateLatency,
    Shifted,
    Sum,
    evaluate,
    horizontal_deviation,
    lower_pseudo_inverse,
    pointwise_min,
    shift_left,
)
from damperkit.errors import DomainError

US = 1e-6


def test_leaky_bucket_value():
    assert evaluate(LeakyBucket(2e6, 10_000), 1.262 * US) == pytest.approx(10_002.524, abs=1e-9)


def test_curves_vanish_at_origin():
    assert evaluate(LeakyBucket(2e6, 10_000), 0) == 0
    assert evaluate(PacketStaircase(10, 8e-3, 10), 0) == 0


def test_rate_latency_is_zero_up_to_latency():
    assert evaluate(RateLatency(62.49e6, 12.5 * US), 12.5 * US) == 0


def test_negative_time_is_rejected():
    with pytest.raises(DomainError):
        evaluate(LeakyBucket(1, 1), -1e-9)


class TestPseudoInverse:
    def test_below_burst(self):
        assert lower_pseudo_inverse(LeakyBucket(2e6, 10_000), 200) == 0

    def test_above_burst(self):
        assert lower_pseudo_inverse(LeakyBucket(2e6, 10_000), 12_000) == pytest.approx(1e-3, rel=1e-12)

    def test_staircase_step(self):
        assert lower_pseudo_inverse(PacketStaircase(10, 8e-3, 10), 11) == pytest.approx(8e-3, rel=1e-12)

    def test_staircase_step_matches_grid_scan(self):
        s = PacketStaircase(10, 8e-3, 10)
        grid = [i * 1e-5 for i in range(0, 3000)]
        first = next(t for t in grid if s.eval_right(t) >= 11)
        assert lower_pseudo_inverse(s, 11) == pytest.approx(first, abs=1e-5)

    def test_negative_level_is_rejected(self):
        with pytest.raises(DomainError):
            lower_pseudo_inverse(LeakyBucket(1, 1), -1)


class TestHorizontalDeviation:
    def test_leaky_bucket_through_rate_latency(self):
        d = horizontal_deviation(LeakyBucket(1e6, 1_000), RateLatency(62.49e6, 12.5 * US))
        assert d == pytest.approx(12.5 * US + 1_000 / 62.49e6, rel=1e-12)

    def test_overload_is_unbounded(self):
        assert math.isinf(horizontal_deviation(LeakyBucket(62.49e6 + 1, 64), RateLatency(62.49e6, 12.5 * US)))

    def test_unit_mismatch(self):
        with pytest.raises(DomainError):
            horizontal_deviation(LeakyBucket(1, 1, unit="packets"), RateLatency(10, 1))

    def test_staircase_against_grid_search(self):
        alpha = PacketStaircase(10, 8e-3, 10, packet_bytes=147)
        beta = RateLatency(62.49e6, 12.5 * US)
        period = 8e-3
        grid = [i * period / 400 for i in range(1, 4001)]
        # sup over t of the time service needs to catch up with the right limit of alpha
        worst = 0.0
        for t in grid:
            for level in (alpha.eval(t), alpha.eval_right(t)):
                catch_up = beta.latency + level / beta.rate
                worst = max(worst, catch_up - t)
        worst = max(worst, beta.latency + alpha.eval_right(0) / beta.rate)
        assert horizontal_deviation(alpha, beta) == pytest.approx(worst, rel=1e-9)


class TestShift:
    def test_zero_shift_is_identity(self):
        c = LeakyBucket(2e6, 10_000)
        assert shift_left(c, 0) is c

    def test_leaky_bucket_closed_form(self):
        out = shift_left(LeakyBucket(2e6, 10_000), 1.262 * US)
        assert out == LeakyBucket(2e6, 10_000 + 2e6 * 1.262 * US)

    def test_staircase_gains_one_period(self):
        s = PacketStaircase(10, 8e-3, 10)
        shifted = shift_left(s, 8e-3)
        assert shifted.eval_right(0) == s.eval_right(0) + 10
        for t in (1e-3, 8e-3, 9e-3, 20e-3):
            assert shifted.eval(t) == s.eval(t + 8e-3)

    def test_negative_shift(self):
        with pytest.raises(DomainError):
            shift_left(LeakyBucket(1, 1), -1)


def test_sum_of_no_curves_is_zero():
    assert Sum((), unit="bytes").eval(1.0) == 0


def test_min_needs_matching_units():
    with pytest.raises(DomainError):
        Min(LeakyBucket(1, 1), LeakyBucket(1, 1, unit="packets"))


# -- invariants -----------------------------------------------------------------------

rates = st.floats(1e3, 1e9)
bursts = st.floats(0, 1e5)
times = st.floats(1e-9, 1.0)


@st.composite
def curves(draw):
    kind = draw(st.sampled_from(["lb", "rl", "stair", "min", "shifted", "sum"]))
    if kind == "lb":
        return LeakyBucket(draw(rates), draw(bursts))
    if kind == "rl":
        return RateLatency(draw(rates), draw(st.floats(0, 1e-3)))
    if kind == "stair":
        n = draw(st.integers(1, 5))
        return PacketStaircase(draw(st.integers(n, 20)), draw(st.floats(1e-5, 1e-2)), n,
                               packet_bytes=draw(st.sampled_from([64, 147, 1500])))
    if kind == "min":
        return Min(LeakyBucket(draw(rates), draw(bursts)), LeakyBucket(draw(rates), draw(bursts)))
    if kind == "shifted":
        return Shifted(LeakyBucket(draw(rates), draw(bursts)), draw(st.floats(0, 1e-3)))
    return Sum((LeakyBucket(draw(rates), draw(bursts)), LeakyBucket(draw(rates), draw(bursts))))


@pytest.mark.invariant
@settings(max_examples=200, deadline=None)
@given(curves(), st.floats(0, 1e6))
def test_pseudo_inverse_reaches_level(curve, k):
    t = lower_pseudo_inverse(curve, k)
    if math.isinf(t):
        return
    # The level is reached right after t (left limits at staircase jumps)...
    assert curve.eval_right(t) >= k * (1 - 1e-9) - 1e-9
    # ...and not before.
    if t > 0:
        assert curve.eval(t * (1 - 1e-6)) <= k * (1 + 1e-9) + 1e-9


@pytest.mark.invariant
@settings(max_examples=200, deadline=None)
@given(curves(), st.floats(0, 1e6), st.floats(0, 1e6))
def test_pseudo_inverse_is_monotone(curve, k1, k2):
    lo, hi = sorted((k1, k2))
    assert lower_pseudo_inverse(curve, lo) <= lower_pseudo_inverse(curve, hi) * (1 + 1e-12)


@pytest.mark.invariant
@settings(max_examples=200, deadline=None)
@given(st.lists(curves().filter(lambda c: c.unit == "bytes"), min_size=3, max_size=3), times)
def test_min_commutes_and_associates(cs, t):
    a, b, c = cs
    ref = min(a.eval(t), b.eval(t), c.eval(t))
    left = Min(Min(a, b), c).eval(t)
    right = Min(a, Min(c, b)).eval(t)
    folded = pointwise_min(c, b, a).eval(t)
    for v in (left, right, folded):
        assert v == pytest.approx(ref, rel=1e-12, abs=1e-12)
