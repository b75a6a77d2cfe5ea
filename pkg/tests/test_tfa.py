import math

import pytest

from damperkit.bounds import JcsSpec
from damperkit.clocks import PERFECT
from damperkit.curves import LeakyBucket, RateLatency, Sum
from damperkit.errors import ConfigError
from damperkit.tfa import (
    DEPLOYMENTS,
    NetFlow,
    NetworkSpec,
    deployment_report,
    fixed_point,
    node_delay_bound,
)

US = 1e-6
R, T = 1e8, 10 * US
RATE, BURST = 1e6, 1_000
PROP, FABRIC = 1 * US, 2 * US


def line(flows=None, service=None, **kw):
    """Host A -> switch B -> host C with a perfect clock."""
    if flows is None:
        flows = [NetFlow("f", ("A", "B", "C"), LeakyBucket(RATE, BURST), l_min=100)]
    return NetworkSpec({"A": "host", "B": "switch", "C": "host"}, flows, service or RateLatency(R, T),
                       fabric=JcsSpec(FABRIC, 0.0, delta_min=0.5 * US, name="fabric"),
                       propagation=PROP, clock=PERFECT, **kw)


class TestNodeDelay:
    def test_leaky_bucket_through_rate_latency(self):
        assert node_delay_bound(LeakyBucket(RATE, BURST), RateLatency(R, T)) == pytest.approx(T + BURST / R)

    def test_empty_aggregate_waits_for_latency(self):
        assert node_delay_bound(None, RateLatency(R, T)) == T
        assert node_delay_bound(Sum((), unit="bytes"), RateLatency(R, T)) == T

    def test_overload_is_unbounded(self):
        assert math.isinf(node_delay_bound(LeakyBucket(2 * R, BURST), RateLatency(R, T)))


class TestTwoHops:
    def test_without_dampers(self):
        res = fixed_point(line(), "none")
        d_ab = T + BURST / R
        d_bc = T + (BURST + RATE * (d_ab + PROP + FABRIC)) / R
        assert res.per_port_delay[("A", "B")] == pytest.approx(d_ab, rel=1e-12)
        assert res.per_port_delay[("B", "C")] == pytest.approx(d_bc, rel=1e-12)
        b = res.per_flow_bounds["f"]
        assert b.d_upper == pytest.approx(d_ab + PROP + FABRIC + d_bc + PROP, rel=1e-12)
        assert b.d_lower == 0
        assert b.jitter == b.d_upper
        assert res.converged

    def test_rcsp_uses_block_jitter(self):
        res = fixed_point(line(), "rcsp")
        block_jitter = 1 * US + 2e-9  # both tolerances, perfect clock, no header error
        assert res.per_flow_bounds["f"].jitter == pytest.approx(2 * block_jitter, rel=1e-9)
        d_bc = T + (BURST + RATE * block_jitter) / R
        assert res.per_port_delay[("B", "C")] == pytest.approx(d_bc, rel=1e-9)

    @pytest.mark.parametrize("deployment", [d for d in DEPLOYMENTS if d != "none"])
    def test_dampers_converge_fast(self, deployment):
        res = fixed_point(line(), deployment)
        assert res.converged
        assert res.iterations <= 2

    @pytest.mark.parametrize("deployment", [d for d in DEPLOYMENTS if d != "none"])
    def test_dampers_cut_jitter(self, deployment):
        none = fixed_point(line(), "none").per_flow_bounds["f"]
        damped = fixed_point(line(), deployment).per_flow_bounds["f"]
        assert damped.jitter < none.jitter

    def test_hol_needs_packet_curve(self):
        net = line([NetFlow("f", ("A", "B", "C"), LeakyBucket(RATE, BURST))])
        with pytest.raises(ConfigError):
            fixed_point(net, "hol")


def test_no_flows():
    res = fixed_point(line([]), "fopleq")
    assert res.converged
    assert res.per_flow_bounds == {}


def test_unstable_port():
    res = fixed_point(line(service=RateLatency(RATE / 2, T)), "none")
    assert not res.converged
    assert math.isinf(res.per_flow_bounds["f"].d_upper)


def test_unknown_deployment():
    with pytest.raises(ConfigError):
        fixed_point(line(), "carrier_pigeon")


class TestNetworkChecks:
    def test_missing_link(self):
        with pytest.raises(ConfigError):
            line(links=[("A", "B")])

    def test_host_in_the_middle(self):
        with pytest.raises(ConfigError):
            NetworkSpec({"A": "host", "B": "host", "C": "host"},
                        [NetFlow("f", ("A", "B", "C"), LeakyBucket(RATE, BURST))], RateLatency(R, T))

    def test_duplicate_flow_ids(self):
        f = NetFlow("f", ("A", "B", "C"), LeakyBucket(RATE, BURST))
        with pytest.raises(ConfigError):
            line([f, f])


def test_report_is_deterministic():
    net = line()
    a = deployment_report(net, fabric_fifo=[True, False])
    b = deployment_report(net, fabric_fifo=[True, False])
    assert a == b
    assert len(a) == 2 * len(DEPLOYMENTS)


def test_orion_dampers_converge(orion):
    for dep in DEPLOYMENTS[1:]:
        res = fixed_point(orion, dep)
        assert res.converged and res.iterations <= 2
