import math
import random
import secrets
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare

from conftest import ForcedRng
from odinrtt.errors import NoReachableHop, StrictExhausted
from odinrtt.estimator import (
    EstimateConfig,
    Mode,
    PeerRttState,
    SourceKind,
    adopt_observed,
    estimate_rtt,
    randomize_last_octet,
    update_estimate,
)
from odinrtt.probe import same_slash24
from odinrtt.simnet import (
    AdversaryConfig,
    AdversaryKind,
    HostSpec,
    RouterSpec,
    SimTransport,
    SubnetSpec,
    TopologySpec,
    build_topology,
    chain_topology,
    random_tree,
)
from odinrtt.simnet.topology import LinkSpec

durations = st.floats(min_value=0, max_value=1e4, allow_nan=False, allow_infinity=False)


class TestRandomizeLastOctet:
    def test_prefix_preserved(self):
        assert randomize_last_octet("203.0.113.77", ForcedRng(9)) == "203.0.113.9"

    def test_own_octet_redrawn(self):
        rng = ForcedRng(1, 2)
        out = randomize_last_octet("10.0.0.1", rng)
        assert out != "10.0.0.1" and out == "10.0.0.2"
        assert rng.calls == [256, 256]

    def test_extra_exclusions(self):
        assert randomize_last_octet("10.0.0.1", ForcedRng(5, 6, 7), exclude=[5, 6]) == "10.0.0.7"

    def test_default_source_is_cryptographic(self, monkeypatch):
        made = []
        real = secrets.SystemRandom

        def spy():
            made.append(1)
            return real()

        monkeypatch.setattr("odinrtt.estimator.secrets.SystemRandom", spy)
        randomize_last_octet("10.0.0.1")
        assert made

    def test_uniform_over_allowed_octets(self):
        n = 10_000
        rng = random.Random(2024)
        counts = Counter(int(randomize_last_octet("198.18.4.200", rng).rsplit(".", 1)[1]) for _ in range(n))
        assert 200 not in counts
        allowed = [o for o in range(256) if o != 200]
        p = 1 / 255
        mean, sigma = n * p, math.sqrt(n * p * (1 - p))
        for o in allowed:
            assert abs(counts[o] - mean) <= 4 * sigma, o
        assert chisquare([counts[o] for o in allowed]).pvalue > 0.001

    @given(st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1))
    def test_same_slash24_never_self(self, addr_int, seed):
        addr = ".".join(str((addr_int >> s) & 255) for s in (24, 16, 8, 0))
        out = randomize_last_octet(addr, random.Random(seed))
        assert same_slash24(addr, out) and out != addr


class TestUpdateEstimate:
    @pytest.mark.parametrize("prior,observed,delta,expected", [
        (10.0, 8.0, 0.1, 8.0),
        (10.0, 12.0, 0.1, 10.1),
        (10.0, 10.0, 0.1, 10.1),
    ])
    def test_examples(self, prior, observed, delta, expected):
        assert update_estimate(prior, observed, delta) == expected

    @given(durations, durations, st.floats(min_value=1e-6, max_value=10))
    def test_only_two_moves(self, prior, observed, delta):
        new = update_estimate(prior, observed, delta)
        assert new == observed if observed < prior else new == prior + delta

    @given(durations, st.integers(1, 300), st.floats(min_value=1, max_value=500), st.floats(min_value=0, max_value=1))
    def test_bounded_inflation(self, r, k, inflation, frac):
        delta = 0.1
        est = r
        for i in range(k):
            # every inflated observation sits above the running estimate
            est = update_estimate(est, r + k * delta + inflation, delta)
        assert est == pytest.approx(r + k * delta, rel=1e-12, abs=1e-9)
        true_rtt = frac * est * 0.999
        assert update_estimate(est, true_rtt, delta) == true_rtt

    def test_control_rule(self):
        assert adopt_observed(10.0, 50.0, 0.1) == 50.0


def forty_ms_net(neighbors_reachable=True, populate=True):
    """Gateway RTT 38 ms, hosts 40 ms; target 203.0.113.50."""
    if populate:
        hosts = [HostSpec(o, neighbors_reachable or o == 50, 1.0) for o in range(256)]
    else:
        hosts = [HostSpec(50, True, 1.0)]
    net = build_topology(chain_topology([5.0, 5.0, 9.0], hosts))
    return net, SimTransport(net)


TARGET = "203.0.113.50"


class TestEstimateRtt:
    def test_strict_immediate_decrease(self):
        net, tr = forty_ms_net()
        cfg = EstimateConfig(mode=Mode.STRICT)
        prior = PeerRttState(TARGET, 100.0)
        res = estimate_rtt(TARGET, prior, cfg, tr, rng=random.Random(1))
        assert net.ground_truth_rtt(TARGET) == 40.0
        assert res.estimate == 40.0 and res.source_kind is SourceKind.NEIGHBOR_REACHED
        assert res.source_node == res.probed_address != TARGET

    def test_permissive_uses_last_router(self):
        net, tr = forty_ms_net(populate=False)
        cfg = EstimateConfig(mode=Mode.PERMISSIVE, timeout_ms=200)
        res = estimate_rtt(TARGET, PeerRttState(TARGET, 100.0), cfg, tr, rng=random.Random(1))
        assert res.estimate == 38.0 == net.ground_truth_rtt("198.51.100.3")
        assert res.source_kind is SourceKind.LAST_REACHABLE_ROUTER
        assert res.source_node == "198.51.100.3"

    def test_permissive_reaches_neighbor_when_it_answers(self):
        _, tr = forty_ms_net()
        res = estimate_rtt(TARGET, PeerRttState(TARGET, 100.0), EstimateConfig(), tr, rng=random.Random(5))
        assert res.source_kind is SourceKind.NEIGHBOR_REACHED and res.estimate == 40.0

    def test_incremental_increase(self):
        _, tr = forty_ms_net()
        res = estimate_rtt(TARGET, PeerRttState(TARGET, 10.0), EstimateConfig(delta=0.1, mode=Mode.STRICT), tr,
                           rng=random.Random(1))
        assert res.observed == 40.0 and res.estimate == 10.1

    def test_does_not_mutate_prior(self):
        _, tr = forty_ms_net()
        prior = PeerRttState(TARGET, 100.0)
        estimate_rtt(TARGET, prior, EstimateConfig(), tr, rng=random.Random(1))
        assert prior.rtt_est == 100.0 and not prior.history

    def test_strict_retries_skip_dead_neighbors(self, chain):
        _, tr = chain
        rng = ForcedRng(8, 8, 9)
        res = estimate_rtt("203.0.113.7", PeerRttState("203.0.113.7", 100.0),
                           EstimateConfig(mode=Mode.STRICT, timeout_ms=100), tr, rng=rng)
        assert res.probed_address == "203.0.113.9" and res.retries_used == 1
        assert len(rng.calls) == 3

    def test_strict_exhausted(self):
        _, tr = forty_ms_net(populate=False)
        cfg = EstimateConfig(mode=Mode.STRICT, strict_max_retries=3, timeout_ms=100)
        with pytest.raises(StrictExhausted) as info:
            estimate_rtt(TARGET, PeerRttState(TARGET, 1.0), cfg, tr, rng=random.Random(0))
        assert len(info.value.attempts) == 4 and TARGET not in info.value.attempts

    def test_no_reachable_hop(self):
        net = build_topology(chain_topology([5.0], [HostSpec(1, True, 1.0)]))
        with pytest.raises(NoReachableHop):
            estimate_rtt("8.8.8.8", PeerRttState("8.8.8.8", 1.0), EstimateConfig(timeout_ms=50),
                         SimTransport(net), rng=random.Random(0))

    def test_target_never_supplies_its_own_rtt(self):
        # the target is the gateway router itself; traces to its neighbors pass through it
        routers = (RouterSpec("V", ("192.0.2.1",)), RouterSpec("R1", ("198.51.100.1",)),
                   RouterSpec("GW", ("203.0.113.1",)))
        links = (LinkSpec("V", "R1", 5.0), LinkSpec("R1", "GW", 7.0))
        subnets = (SubnetSpec("203.0.113.0/24", "GW", default_host=HostSpec(-1, False, 1.0)),)
        net = build_topology(TopologySpec(routers, links, subnets, vantage="V"))
        res = estimate_rtt("203.0.113.1", PeerRttState("203.0.113.1", 100.0), EstimateConfig(timeout_ms=100),
                           SimTransport(net), rng=random.Random(3))
        assert res.source_node == "198.51.100.1" and res.estimate == 10.0

    @pytest.mark.parametrize("mode", list(Mode))
    def test_never_contacts_target(self, mode):
        for seed in range(15):
            spec = random_tree(seed, n_routers=15, n_subnets=3, hosts_per_subnet=256 if mode is Mode.STRICT else 4)
            net = build_topology(spec, rng_seed=seed)
            target = sorted(net.hosts)[seed % len(net.hosts)]
            estimate_rtt(target, PeerRttState(target, 0.5), EstimateConfig(mode=mode, timeout_ms=100),
                         SimTransport(net), rng=random.Random(seed))
            assert all(ev.node != target for ev in net.delivery_log)
            assert all(ev.packet is None or target not in (ev.packet.dst, ev.packet.src) for ev in net.delivery_log)

    def test_tamper_nullity(self):
        net_a, tr_a = forty_ms_net()
        net_b, tr_b = forty_ms_net()
        net_b.install_adversary(AdversaryConfig(AdversaryKind.RESPONSE_DELAY, TARGET, extra_ms=500.0))
        for seed in range(20):
            for mode in Mode:
                cfg = EstimateConfig(mode=mode)
                a = estimate_rtt(TARGET, PeerRttState(TARGET, 100.0), cfg, tr_a, rng=random.Random(seed))
                b = estimate_rtt(TARGET, PeerRttState(TARGET, 100.0), cfg, tr_b, rng=random.Random(seed))
                assert a == b

    def test_strict_implies_neighbor_reached(self):
        for seed in range(10):
            net, tr = forty_ms_net()
            res = estimate_rtt(TARGET, PeerRttState(TARGET, 1.0), EstimateConfig(mode=Mode.STRICT), tr,
                               rng=random.Random(seed))
            assert res.source_kind is SourceKind.NEIGHBOR_REACHED
            assert same_slash24(res.probed_address, TARGET)


class TestConfigAndState:
    @pytest.mark.parametrize("kwargs", [dict(delta=0), dict(initial_estimate=-1), dict(strict_max_retries=0)])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            EstimateConfig(**kwargs)

    def test_defaults(self):
        cfg = EstimateConfig()
        assert (cfg.delta, cfg.initial_estimate, cfg.strict_max_retries) == (0.1, 0.5, 8)
        assert PeerRttState.initial("10.0.0.1").rtt_est == 0.5

    def test_commit_and_bounded_history(self):
        _, tr = forty_ms_net()
        state = PeerRttState.initial(TARGET)
        rng = random.Random(0)
        for i in range(100):
            state.commit(estimate_rtt(TARGET, state, EstimateConfig(), tr, rng=rng), float(i))
        assert len(state.history) == 64
        assert state.snapshot() == (state.rtt_est, 99.0)
        # 0.5 ms + 100 increments of 0.1 ms, all still below 40 ms
        assert state.rtt_est == pytest.approx(10.5)
