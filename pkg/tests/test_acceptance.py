"""Acceptance gate. Each criterion prints one PASS/FAIL line, then asserts."""

import hashlib
import math
import random
import subprocess
import sys
import time

import pytest
from scipy import stats

from odinrtt.estimator import EstimateConfig, Mode, PeerRttState, estimate_rtt, update_estimate
from odinrtt.evalharness import run_simulated_evaluation
from odinrtt.scenarios import ALICE, CAROL, DAVE, alice_bob_topology, ddos_economics, shipped_scenario_path, \
    simulate_broadcast
from odinrtt.scheduler import SchedulerConfig, next_assessment_delay
from odinrtt.simnet import PathSampler, SimTransport, build_topology


@pytest.fixture
def verdict(capsys):
    def report(n, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, detail
    return report


def test_1_update_rule_exactness(verdict):
    rng = random.Random(2024)
    triples = [(rng.uniform(0, 500), rng.uniform(0, 500), rng.uniform(1e-3, 5)) for _ in range(1000)]
    # a slice with ties and equal values exercises the boundary
    triples[:50] = [(x, x, d) for x, _, d in triples[:50]]
    t0 = time.perf_counter()
    got = [update_estimate(p, o, d) for p, o, d in triples]
    elapsed = time.perf_counter() - t0
    expect = [o if o < p else p + d for p, o, d in triples]
    mismatches = sum(1 for g, e in zip(got, expect) if g != e)
    verdict(1, mismatches == 0 and elapsed < 1.0,
            f"{mismatches} mismatches over 1000 triples, {elapsed * 1000:.2f} ms")


def test_2_non_interaction(verdict):
    rng = random.Random(77)
    touched, runs, kinds = 0, 0, set()
    for i in range(200):
        mode = Mode.STRICT if i % 2 == 0 else Mode.PERMISSIVE
        silent = mode is Mode.PERMISSIVE and i % 4 == 1
        sampler = PathSampler(neighbors_reachable=not silent, populate_subnet=True)
        spec, target = sampler.draw(rng)
        net = build_topology(spec, rng_seed=i)
        cfg = EstimateConfig(mode=mode, probes_per_ttl=1, timeout_ms=200)
        result = estimate_rtt(target, PeerRttState.initial(target, cfg), cfg, SimTransport(net), rng=rng)
        kinds.add(result.source_kind)
        runs += 1
        touched += sum(1 for ev in net.delivery_log if ev.packet is not None and ev.packet.dst == target)
    verdict(2, touched == 0 and runs == 200 and len(kinds) == 2,
            f"{touched} packets addressed to targets across {runs} estimates (source kinds: "
            f"{sorted(k.value for k in kinds)})")


def test_3_ddos_economics(verdict):
    t0 = time.perf_counter()
    r = ddos_economics(epsilon_ms=20.0, delta=0.1, max_interval_s=180.0, seed=0)
    elapsed = time.perf_counter() - t0
    steps = [b - a for a, b in zip([r.true_rtt] + r.attack_estimates, r.attack_estimates)]
    per_step_ok = all(math.isclose(s, 0.1, abs_tol=1e-9) for s in steps)
    needed = math.ceil(round(20.0 / 0.1, 9))
    ok = (per_step_ok and r.assessments_to_gain_epsilon == needed == 200
          and r.recovery_estimates == [r.true_rtt]
          and r.control_estimate_after_one > r.true_rtt and elapsed < 10.0)
    verdict(3, ok, f"+delta per step: {per_step_ok}; {r.assessments_to_gain_epsilon} assessments to gain eps; "
                   f"recovery in {len(r.recovery_estimates)}; control after one: "
                   f"{r.control_estimate_after_one} vs truth {r.true_rtt}; {elapsed:.2f} s wall")


def test_4_strict_structural_accuracy(verdict):
    rep = run_simulated_evaluation(500, Mode.STRICT, PathSampler(), seed=4)
    worst = max(abs(e) for e in rep.errors)
    verdict("4a", rep.histogram.total == 500 and worst <= 1e-9,
            f"{rep.histogram.total} symmetric topologies, max |error| {worst:.3g}")


def test_4_strict_with_last_hop_asymmetry(verdict):
    # every host's one-way last hop is offset by U(-1, +1) ms around the subnet base
    rep = run_simulated_evaluation(500, Mode.STRICT, PathSampler(host_spread_ms=1.0), seed=4)
    frac = sum(1 for e in rep.errors if abs(e) <= 0.005) / len(rep.errors)
    mean_rtt = sum(s.rtt_a_actual for s in rep.samples) / len(rep.samples)
    verdict("4b", frac >= 0.94,
            f"{frac:.1%} within 0.5% (need >= 94%), {len(rep.errors)} samples, mean RTT {mean_rtt:.1f} ms")


def test_5_permissive_skew(verdict):
    sampler = PathSampler(last_hop_ms=(0.0, 3.0), neighbors_reachable=False, populate_subnet=False)
    rep = run_simulated_evaluation(500, Mode.PERMISSIVE, sampler, seed=5)
    worst = max(rep.errors)
    frac = sum(1 for e in rep.errors if e >= -0.15) / len(rep.errors)
    verdict(5, worst <= 1e-9 and frac >= 0.90,
            f"max error {worst:.3g} (must be <= 0), {frac:.1%} within -15% (need >= 90%), "
            f"{len(rep.errors)} samples")


def test_6_equal_arrival(verdict):
    peers = (ALICE, CAROL, DAVE)

    def spread(bump):
        net = build_topology(alice_bob_topology())
        states = []
        for p in peers:
            s = PeerRttState.initial(p)
            s.rtt_est = net.ground_truth_rtt(p) + bump.get(p, 0.0)
            states.append(s)
        return simulate_broadcast(net, states, SchedulerConfig()).completion_spread

    exact = spread({})
    rng = random.Random(6)
    perturbed = [(x, spread({p: x})) for p in peers for x in (rng.uniform(0.01, 30.0),)]
    ok = exact == 0.0 and all(math.isclose(s, x, abs_tol=1e-9) for x, s in perturbed)
    verdict(6, ok, f"exact spread {exact} ms; perturbed (x, spread): "
                   + ", ".join(f"({x:.3f}, {s:.3f})" for x, s in perturbed))


def test_7_interval_randomness(verdict):
    cfg = SchedulerConfig(max_interval=180.0)
    draws = [next_assessment_delay(cfg) for _ in range(10_000)]
    in_range = all(0.0 <= d < 180.0 for d in draws)
    counts = [0] * 36
    for d in draws:
        counts[int(d // 5.0)] += 1
    p = stats.chisquare(counts).pvalue
    verdict(7, in_range and p > 0.001, f"chi-square p={p:.4f} over 36 bins, all in [0,180): {in_range}")


def test_8_simulate_determinism(verdict, tmp_path):
    digests = []
    for i in range(3):
        log = tmp_path / f"log{i}.jsonl"
        subprocess.run([sys.executable, "-m", "odinrtt.cli", "simulate", str(shipped_scenario_path()),
                        "--seed", "42", "--log", str(log)], check=True, capture_output=True)
        digests.append(hashlib.sha256(log.read_bytes()).hexdigest())
    verdict(8, len(set(digests)) == 1 and log.stat().st_size > 0,
            f"3 runs, {len(set(digests))} distinct log digest(s) {digests[0][:12]}")
