import copy
import json

import pytest
from hypothesis import given, settings, strategies as st

from odinrtt.estimator import PeerRttState, adopt_observed, update_estimate
from odinrtt.scenarios import (
    ALICE,
    CAROL,
    DAVE,
    alice_bob_topology,
    ddos_economics,
    load_scenario,
    run_scenario,
    shipped_scenario_path,
    simulate_broadcast,
    toggling_attack_exposure,
)
from odinrtt.scheduler import SchedulerConfig
from odinrtt.simnet import build_topology

PEERS = (ALICE, CAROL, DAVE)


def exact_peers(net, bump=None):
    out = []
    for p in PEERS:
        s = PeerRttState.initial(p)
        s.rtt_est = net.ground_truth_rtt(p) + (bump.get(p, 0.0) if bump else 0.0)
        out.append(s)
    return out


def test_topology_truths():
    net = build_topology(alice_bob_topology())
    assert [net.ground_truth_rtt(p) for p in PEERS] == [34.0, 70.0, 120.0]


class TestBroadcast:
    def test_exact_estimates_equalize_completion(self):
        net = build_topology(alice_bob_topology())
        out = simulate_broadcast(net, exact_peers(net), SchedulerConfig())
        assert out.completion_spread == 0.0
        assert set(out.completed.values()) == {300.0}
        # one-way arrival is not what the rule equalizes
        assert out.delivery_spread == pytest.approx((120 - 34) / 2)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.01, 50.0), st.sampled_from(PEERS))
    def test_perturbation_shows_up_as_spread(self, x, who):
        net = build_topology(alice_bob_topology())
        out = simulate_broadcast(net, exact_peers(net, {who: x}), SchedulerConfig())
        assert out.completion_spread == pytest.approx(x, abs=1e-9)
        assert out.completed[who] == pytest.approx(300.0 - x, abs=1e-9)

    def test_disabled_sends_immediately(self):
        net = build_topology(alice_bob_topology())
        out = simulate_broadcast(net, exact_peers(net), SchedulerConfig(enabled=False))
        assert out.completed == {ALICE: 34.0, CAROL: 70.0, DAVE: 120.0}


class TestDdosEconomics:
    def test_cost_and_recovery(self):
        r = ddos_economics(epsilon_ms=20, delta=0.1, seed=0)
        assert r.true_rtt == 34.0
        assert set(r.attack_observed) == {74.0}
        assert r.assessments_to_gain_epsilon == 200
        assert r.attack_estimates[-1] == pytest.approx(54.0, abs=1e-6)
        assert len(r.recovery_estimates) == 1 and r.recovery_estimates[0] == 34.0
        assert r.control_estimate_after_one == 74.0

    @pytest.mark.parametrize("eps,delta", [(10, 0.5), (5, 1.0)])
    def test_scales_with_ratio(self, eps, delta):
        r = ddos_economics(epsilon_ms=eps, delta=delta, max_interval_s=5, seed=1)
        assert r.assessments_to_gain_epsilon == round(eps / delta)


class TestToggling:
    def test_odin_inflation_bounded_by_a_few_deltas(self):
        r = toggling_attack_exposure(update_estimate, cycles=10, seed=2)
        assert r.max_inflation < 1.0
        assert r.assessments > 5

    def test_control_is_exposed(self):
        ctrl = toggling_attack_exposure(adopt_observed, cycles=10, seed=2)
        odin = toggling_attack_exposure(update_estimate, cycles=10, seed=2)
        assert ctrl.max_inflation == pytest.approx(40.0)
        assert ctrl.inflated_fraction > 0.3
        # ODIN's estimate is only ever above the truth by the delta creep
        assert odin.max_inflation < ctrl.max_inflation / 10


class TestScenarioFiles:
    def test_shipped_loads(self):
        doc = load_scenario(shipped_scenario_path())
        assert doc["seed"] == 42 and doc["peers"] == list(PEERS)

    def test_unknown_key(self, tmp_path):
        p = tmp_path / "s.json"
        p.write_text(json.dumps({"topology": {}, "extra": 1}))
        with pytest.raises(ValueError):
            load_scenario(p)

    def test_run_is_deterministic(self):
        doc = load_scenario(shipped_scenario_path())
        a_net, a = run_scenario(copy.deepcopy(doc))
        b_net, b = run_scenario(copy.deepcopy(doc))
        assert a == b and list(a_net.log_lines()) == list(b_net.log_lines())

    def test_ops(self):
        doc = load_scenario(shipped_scenario_path())
        doc["script"] = [
            {"op": "advance", "seconds": 1},
            {"op": "trace", "addr": ALICE},
            {"op": "estimate", "addr": CAROL, "mode": "permissive"},
            {"op": "adversary", "adversary": {"kind": "RESPONSE_DELAY", "target": DAVE, "extra_ms": 5}},
            {"op": "ping", "addr": DAVE},
            {"op": "adversary_window", "index": 0, "start_s": 0, "end_s": 1},
            {"op": "ping", "addr": DAVE},
        ]
        _, res = run_scenario(doc)
        assert res[0]["result"] is None and res[1]["t_ms"] == 1000.0
        assert res[1]["result"]["hops"][-1]["responder"] == ALICE
        assert res[2]["result"]["observed_ms"] == 70.0
        assert res[4]["result"]["rtt_ms"] == 125.0
        assert res[6]["result"]["rtt_ms"] == 120.0

    def test_bad_op(self):
        doc = load_scenario(shipped_scenario_path())
        doc["script"] = [{"op": "teleport"}]
        with pytest.raises(ValueError):
            run_scenario(doc)
