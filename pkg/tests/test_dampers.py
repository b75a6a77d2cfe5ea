import random
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from damperkit.dampers import (
    HeaderErrorBudget,
    HeaderMode,
    Rounding,
    Variant,
    apply_header_error,
    earliness,
    fopleq,
    from_tolerances,
    head_of_line,
    hol_closed_form,
    hol_decompose,
    hol_release,
    ideal,
    in_hol_envelope,
    in_resequencing_envelope,
    in_tolerance_envelope,
    quantize,
    rcsp,
    resequence_release,
    rgcq,
    rounding_error_range,
    sample_header_error,
    sced_plus,
    theoretical_eligibility,
)
from damperkit.errors import ConfigError, DomainError, InfeasibleError

US, NS = 1e-6, 1e-9


class TestPresets:
    def test_rcsp_tolerances(self):
        d = rcsp(1 * US, 2 * NS)
        assert (d.variant, d.delta_l, d.delta_u, d.rounding) == (Variant.TOLERANCE, 1 * US + 2 * NS, 2 * NS,
                                                                 Rounding.FLOOR)

    def test_rgcq_tolerances(self):
        d = rgcq(1 * US, 2 * NS)
        assert (d.delta_l, d.delta_u, d.rounding) == (2 * NS, 1 * US + 2 * NS, Rounding.CEIL)

    def test_fifo_flags(self):
        assert not rcsp(1, 0).fifo and not rgcq(1, 0).fifo and not ideal().fifo
        assert fopleq(1, 0).fifo and sced_plus(1, 0).fifo and head_of_line(0, 1).fifo

    def test_from_tolerances_round_trip(self):
        assert from_tolerances("rcsp", 1 * US, 2 * NS).granularity == pytest.approx(1 * US - 2 * NS)
        assert from_tolerances("rgcq", 2 * NS, 1 * US).delta_u == pytest.approx(1 * US)

    def test_from_tolerances_without_room(self):
        with pytest.raises(ConfigError):
            from_tolerances("rcsp", 2 * NS, 2 * NS)

    def test_bad_specs(self):
        with pytest.raises(ConfigError):
            head_of_line(2, 1)
        with pytest.raises(ConfigError):
            replace(ideal(), delta_u=1.0)


class TestEligibility:
    def test_definition(self):
        assert theoretical_eligibility(100 * US, 150 * US) == 250 * US

    def test_no_header(self):
        assert theoretical_eligibility(100 * US, 0) == 100 * US


class TestQuantize:
    def test_floor(self):
        assert quantize(10.7, rcsp(1.0, 0.0)) == 10.0

    def test_ceil(self):
        assert quantize(10.7, rgcq(1.0, 0.0)) == 11.0

    @pytest.mark.parametrize("make", [rcsp, rgcq])
    def test_grid_fixpoint(self, make):
        assert quantize(12.0, make(1.0, 0.0)) == 12.0

    def test_needs_granularity(self):
        with pytest.raises(ConfigError):
            quantize(1.0, ideal())


class TestResequence:
    def test_running_max(self):
        assert resequence_release([5, 3, 7]) == [5, 5, 7]

    def test_monotone_unchanged(self):
        assert resequence_release([1, 2, 2, 9]) == [1, 2, 2, 9]

    def test_random_against_prefix_max(self):
        rng = random.Random(1)
        for _ in range(10_000):
            seq = [rng.randint(-50, 50) for _ in range(rng.randint(1, 12))]
            assert resequence_release(seq) == [max(seq[: i + 1]) for i in range(len(seq))]


class TestHeadOfLine:
    def test_reduces_to_resequencing(self):
        assert hol_release([5, 3, 7], [0, 0, 0]) == [5, 5, 7]

    def test_pure_queueing(self):
        assert hol_release([0, 0, 0], [1, 1, 1]) == [1, 2, 3]

    def test_single_packet(self):
        assert hol_release([4], [3]) == [7] == hol_closed_form([4], [3]).tolist()

    def test_processing_out_of_range(self):
        with pytest.raises(DomainError):
            hol_release([0, 1], [1, 9], phi_min=0, phi_max=5)

    def test_closed_form_matches_recursion(self):
        rng = random.Random(2)
        for _ in range(10_000):
            n = rng.randint(1, 15)
            e = [rng.randint(0, 10**7) for _ in range(n)]
            phi = [rng.randint(0, 5_000) for _ in range(n)]
            assert hol_release(e, phi) == hol_closed_form(e, phi).tolist()


class TestDecompose:
    def test_forced_x(self):
        assert hol_decompose(0, 0, 0, 2, 4, 3) == (0, 3)

    def test_flat_region(self):
        x, y = hol_decompose(10, 0, 1, 2, 4, 10.5)
        assert x == pytest.approx(0.5)
        assert y <= 10
        assert x + max(10, y) == pytest.approx(10.5)

    def test_endpoints(self):
        assert hol_decompose(0, 0, 1, 2, 4, 2) == (0, 2)
        assert hol_decompose(0, 0, 1, 2, 4, 5) == (1, 4)

    def test_outside_interval(self):
        with pytest.raises(InfeasibleError):
            hol_decompose(0, 0, 1, 2, 4, 6)


class TestHeader:
    def test_default_mode(self):
        assert earliness(250 * US, 0.0, 249 * US) == pytest.approx(1 * US)

    def test_worst_case_packet(self):
        assert earliness(250 * US, 0.0, 250 * US) == 0

    def test_te_stamping(self):
        value = earliness(500 * US, 0.0, 400 * US, HeaderMode.TE_STAMPING, upstream=rgcq(1 * US, 0.0))
        assert value == pytest.approx(101 * US)

    def test_te_stamping_needs_upstream(self):
        with pytest.raises(ConfigError):
            earliness(500 * US, 0.0, 400 * US, "te_stamping")

    def test_zero_error(self):
        assert apply_header_error(7 * US, HeaderErrorBudget(50 * NS)) == 7 * US

    def test_adversarial_plus(self):
        budget = sample_header_error(50 * NS, random.Random(0), "plus")
        assert apply_header_error(1 * US, budget) == pytest.approx(1 * US + 50 * NS)

    def test_random_draws_within_bound(self):
        rng = random.Random(3)
        for _ in range(10_000):
            b = sample_header_error(50 * NS, rng)
            assert b.within_bound()
            assert abs(b.total) <= 50 * NS

    def test_integer_epsilon_gives_integers(self):
        b = sample_header_error(50_000, random.Random(4))
        assert all(isinstance(v, int) for v in (b.e_update, b.e_ts, b.e_tran, b.e_acq, b.e_clk))


# -- invariants -----------------------------------------------------------------------

tentatives = st.lists(st.integers(0, 10**7), min_size=1, max_size=40)


def _rounded(spec, e_tildes, rng, phase):
    lo, hi = rounding_error_range(spec)
    return [quantize(e + rng.uniform(lo, hi), spec, phase) for e in e_tildes]


@pytest.mark.invariant
@settings(max_examples=200, deadline=None)
@given(tentatives, st.sampled_from(["rcsp", "rgcq"]), st.integers(0, 2**32))
def test_tolerance_releases_in_envelope(e_tildes, name, seed):
    rng = random.Random(seed)
    spec = (rcsp if name == "rcsp" else rgcq)(1_000.0, 2.0)
    phase = rng.uniform(0, 1_000)
    for et, e in zip(e_tildes, _rounded(spec, e_tildes, rng, phase)):
        assert in_tolerance_envelope(et, e, spec, tol=1e-6)


@pytest.mark.invariant
@settings(max_examples=200, deadline=None)
@given(tentatives, st.sampled_from(["fopleq", "sced_plus"]), st.integers(0, 2**32))
def test_resequencing_releases_in_envelope(e_tildes, name, seed):
    rng = random.Random(seed)
    spec = (fopleq if name == "fopleq" else sced_plus)(1_000.0, 2.0)
    if spec.rounding is Rounding.NONE:
        raw = [rng.uniform(e - spec.delta_l, e + spec.delta_u) for e in e_tildes]
    else:
        raw = _rounded(spec, e_tildes, rng, rng.uniform(0, 1_000))
    released = resequence_release(raw)
    assert released == sorted(released)
    assert in_resequencing_envelope(e_tildes, released, spec, tol=1e-6)


@pytest.mark.invariant
@settings(max_examples=200, deadline=None)
@given(tentatives, st.integers(0, 2**32))
def test_hol_releases_in_envelope_and_decompose(e_tildes, seed):
    rng = random.Random(seed)
    spec = head_of_line(2, 5, 3, 4)
    raw = [e + rng.randint(-3, 4) for e in e_tildes]
    phi = [rng.randint(2, 5) for _ in e_tildes]
    released = hol_release(raw, phi, 2, 5)
    assert released == sorted(released)
    assert in_hol_envelope(e_tildes, released, spec)
    # every release decomposes as processing + max(previous release, tolerance-shifted eligibility)
    prev = None
    for et, e in zip(e_tildes, released):
        a = et - spec.delta_l if prev is None else prev
        x, y = hol_decompose(a, spec.phi_min, spec.phi_max, et - spec.delta_l, et + spec.delta_u, e)
        assert spec.phi_min <= x <= spec.phi_max
        assert et - spec.delta_l <= y <= et + spec.delta_u
        assert x + max(a, y) == e
        prev = e


@pytest.mark.invariant
@settings(max_examples=300, deadline=None)
@given(tentatives)
def test_ideal_hol_equals_ideal_resequencing(e_tildes):
    assert hol_release(e_tildes, [0] * len(e_tildes)) == resequence_release(e_tildes)
