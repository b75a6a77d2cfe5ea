import random
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from damperkit.bounds import BdsSpec, Block, BoundsResult, JcsSpec, theorem1_bounds
from damperkit.clocks import PERFECT, ClockModel
from damperkit.curves import LeakyBucket
from damperkit.dampers import DamperSpec, Variant, ideal
from damperkit.errors import ConfigError, ContractError
from damperkit.sim.engine import SimConfig, check_bounds, simulate_block
from damperkit.sim.experiments import rcsp_backtoback_experiment, rgcq_reorder_experiment
from damperkit.sim.fuzz import random_block, random_sim_config
from damperkit.sim.sources import PS, SourceSpec
from damperkit.sim.tightness import tightness_trace

US, NS = 1e-6, 1e-9


@pytest.fixture
def ex1_block(ex1):
    return ex1.flows[0].blocks[0]


def greedy(packets, period=20 * US, burst=5):
    return SourceSpec("greedy", packets, alpha=LeakyBucket(1 / period, burst, unit="packets"))


class TestEngine:
    def test_zero_jitter_block(self):
        block = Block([JcsSpec(10 * US), BdsSpec.constant(5 * US), JcsSpec(3 * US)], ideal(), PERFECT)
        report = simulate_block(SimConfig(block, greedy(200), jcs_policy="max", header_error="zero"))
        assert set(report.delay_ps.tolist()) == {18_000_000}
        assert report.violations == []

    def test_example1_block_is_sound(self, ex1_block):
        report = simulate_block(SimConfig(ex1_block, greedy(100_000), seed=1))
        bounds = theorem1_bounds(ex1_block)
        assert report.count == 100_000
        assert report.violations == []
        assert report.max_delay_ps <= bounds.d_upper * PS + report.slack_ps
        assert report.min_delay_ps >= bounds.d_lower * PS - report.slack_ps

    def test_perfect_clocks_reach_upper_bound(self, ex1_block):
        d = ex1_block.damper
        damper = DamperSpec(Variant.TOLERANCE, d.delta_l, d.delta_u)
        block = replace(ex1_block, damper=damper, clock=PERFECT)
        cfg = SimConfig(block, greedy(50), jcs_policy="max", header_error="plus", release_policy="latest")
        report = simulate_block(cfg)
        assert abs(report.max_delay_ps - theorem1_bounds(block).d_upper * PS) <= report.slack_ps

    def test_packet_ids_unique_across_trials(self, ex1_block):
        report = simulate_block(SimConfig(ex1_block, greedy(30), trials=4))
        assert len(set(report.packet_id.tolist())) == 120
        assert report.trial.tolist() == sorted(report.trial.tolist())

    def test_csv_columns(self, ex1_block):
        text = simulate_block(SimConfig(ex1_block, greedy(3))).to_csv()
        assert text.splitlines()[0] == "packet_id,entry_tai_ps,exit_tai_ps,delay_ps,reordered_flag"
        assert len(text.splitlines()) == 4

    def test_bad_settings(self, ex1_block):
        with pytest.raises(ConfigError):
            SimConfig(ex1_block, jcs_policy="psychic")
        with pytest.raises(ConfigError):
            SimConfig(ex1_block, clock_modes=("random",))
        with pytest.raises(ConfigError):
            SourceSpec("greedy", 10)


class TestCheckBounds:
    def test_empty_report(self, ex1_block):
        report = simulate_block(SimConfig(ex1_block, SourceSpec("periodic", 0)), check=False)
        assert check_bounds(report, theorem1_bounds(ex1_block)) == []

    def test_shrunk_bounds_are_caught(self, ex1_block):
        report = tightness_trace(ex1_block, "upper_drift")
        assert report.violations == []
        b = report.bounds
        shrunk = BoundsResult(b.d_upper - 1 * NS, b.d_lower, b.jitter, b.psi_upper, b.psi_lower, b.breakdown)
        out = check_bounds(report, shrunk)
        assert [v["kind"] for v in out] == ["above"]
        assert out[0]["packet_id"] == 0


class TestTightness:
    def test_example1_upper(self, ex1_block):
        report = tightness_trace(ex1_block, "upper_drift")
        assert abs(int(report.delay_ps[0]) - theorem1_bounds(ex1_block).d_upper * PS) <= 1
        assert round(report.delay_ps[0] / PS / US, 2) == 257.13

    def test_example1_lower(self, ex1_block):
        report = tightness_trace(ex1_block, "lower_drift")
        assert abs(int(report.delay_ps[0]) - theorem1_bounds(ex1_block).d_lower * PS) <= 1

    def test_perfect_clock_block(self, ex1_block):
        block = replace(ex1_block, clock=PERFECT)
        report = tightness_trace(block, "upper_drift")
        assert abs(int(report.delay_ps[0]) - theorem1_bounds(block).d_upper * PS) <= 1

    def test_sync_needs_finite_omega(self, ex1_block):
        with pytest.raises(ConfigError):
            tightness_trace(ex1_block, "upper_sync")

    def test_hol_penalty_not_reachable(self, ex1_block):
        from damperkit.dampers import head_of_line

        with pytest.raises(ContractError):
            tightness_trace(replace(ex1_block, damper=head_of_line(0, 5 * NS)), "upper_drift")


class TestReorderingExperiments:
    def test_downstream_slower_never_reorders(self):
        assert rgcq_reorder_experiment(1 * US, 0.0, "downstream_slower", trials=2_000) == 0

    def test_large_negative_transmission_error_always_reorders(self):
        freq = rgcq_reorder_experiment(1 * US, 10 * NS, "symmetric", trials=2_000, e_tran_mode="adversarial")
        assert freq == 1

    def test_spacing_of_one_slot_is_never_back_to_back(self):
        out = rcsp_backtoback_experiment(1 * US, 1 * US, trials=2_000)
        assert out["p_backtoback"] <= 0.01

    def test_tolerance_dampers_do_reorder(self):
        assert rgcq_reorder_experiment(1 * US, 0.0, trials=2_000) > 0
        assert rcsp_backtoback_experiment(0.0, 1 * US, trials=2_000)["p_reorder"] > 0

    def test_back_to_back_at_zero_spacing_reorders_half_the_time(self):
        out = rcsp_backtoback_experiment(0.0, 1 * US, trials=10_000, seed=3)
        assert out["p_backtoback"] == pytest.approx(1.0, abs=0.03)
        assert out["p_reorder"] == pytest.approx(0.5, abs=0.03)


# -- invariants -----------------------------------------------------------------------


@pytest.mark.invariant
@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["fopleq", "sced_plus", "hol", "hol_zero"]), st.integers(0, 2**32))
def test_fifo_dampers_preserve_order(variant, seed):
    rng = random.Random(seed)
    block = random_block(rng, variant, allow_non_fifo=False)
    src = SourceSpec("back_to_back", 300, spacing=rng.uniform(0, 1 * US),
                     alpha=LeakyBucket(1 / rng.uniform(5 * US, 100 * US), rng.randint(1, 10), unit="packets"))
    report = simulate_block(SimConfig(block, src, seed=seed, clock_segment=rng.choice([5e-6, 1e-3])))
    assert not report.reordered.any()
    assert report.violations == []


@pytest.mark.invariant
@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32))
def test_same_seed_same_report(seed):
    cfg = random_sim_config(random.Random(seed), packets=300)
    cfg = replace(cfg, trials=3)
    a, b = simulate_block(cfg), simulate_block(cfg)
    for field in ("packet_id", "trial", "entry_tai_ps", "exit_tai_ps", "reordered", "eligibility_local"):
        assert np.array_equal(getattr(a, field), getattr(b, field))
    assert a.summary_json() == b.summary_json()


@pytest.mark.invariant
def test_parallel_trials_match_serial(ex1_block):
    cfg = SimConfig(ex1_block, greedy(200), trials=4, seed=5)
    a, b = simulate_block(cfg, jobs=1), simulate_block(cfg, jobs=2)
    assert np.array_equal(a.exit_tai_ps, b.exit_tai_ps)
    assert a.summary_json() == b.summary_json()


@pytest.mark.invariant
def test_soundness_sample():
    rng = random.Random(12)
    for _ in range(20):
        report = simulate_block(random_sim_config(rng, packets=500))
        assert report.violations == []
