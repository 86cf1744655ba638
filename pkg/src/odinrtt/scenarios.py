"""Scripted simulator runs: broadcast arrival, the router-DDoS attack, scenario files."""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Callable, Optional

from odinrtt.estimator import (
    EstimateConfig,
    Mode,
    PeerRttState,
    adopt_observed,
    estimate_rtt,
    update_estimate,
)
from odinrtt.probe import ping, trace_route
from odinrtt.scheduler import Odin, SchedulerConfig, config_from_dict, schedule_broadcast
from odinrtt.simnet import (
    AdversaryConfig,
    AdversaryKind,
    HostSpec,
    LinkSpec,
    PacketKind,
    RouterSpec,
    SimClock,
    SimNet,
    SimTransport,
    SubnetSpec,
    TopologySpec,
    build_topology,
    topology_from_dict,
)

ALICE = "203.0.113.66"
CAROL = "100.70.1.20"
DAVE = "100.80.2.30"


def alice_bob_topology(last_hop_ms: float = 1.0) -> TopologySpec:
    """Bob at the vantage; Alice, Carol and Dave each behind their own gateway.

    Every /24 is fully populated so strict mode always finds a neighbor.
    """
    routers = (
        RouterSpec("BOB", ("192.0.2.1",)),
        RouterSpec("CORE", ("198.51.100.1",)),
        RouterSpec("GW-A", ("198.51.100.10",)),
        RouterSpec("GW-C", ("198.51.100.20",)),
        RouterSpec("GW-D", ("198.51.100.30",)),
    )
    links = (
        LinkSpec("BOB", "CORE", 4.0),
        LinkSpec("CORE", "GW-A", 12.0),
        LinkSpec("CORE", "GW-C", 30.0),
        LinkSpec("CORE", "GW-D", 55.0),
    )
    everyone = HostSpec(-1, True, last_hop_ms)
    subnets = (
        SubnetSpec("203.0.113.0/24", "GW-A", default_host=everyone),
        SubnetSpec("100.70.1.0/24", "GW-C", default_host=everyone),
        SubnetSpec("100.80.2.0/24", "GW-D", default_host=everyone),
    )
    return TopologySpec(routers, links, subnets, vantage="BOB")


# ---------------------------------------------------------------- broadcast

@dataclass
class BroadcastOutcome:
    decisions: list
    # peer -> virtual ms at which the order reached the peer
    delivered: dict
    # peer -> virtual ms at which the peer's acknowledgement got back to the sender
    completed: dict

    @property
    def completion_spread(self) -> float:
        return max(self.completed.values()) - min(self.completed.values())

    @property
    def delivery_spread(self) -> float:
        return max(self.delivered.values()) - min(self.delivered.values())


def simulate_broadcast(net: SimNet, peers, cfg: SchedulerConfig, note: str = "order") -> BroadcastOutcome:
    """Send one message to every peer after its scheduled delay and run until all acks return.

    The delay rule subtracts a round-trip estimate, so the instants it
    equalizes are send + RTT, i.e. when each acknowledgement lands back at
    the sender. One-way delivery times are reported alongside.
    """
    start = net.clock
    decisions = schedule_broadcast(peers, cfg, start)
    pids = {}

    def fire(peer):
        pids[peer] = net.send(PacketKind.ORDER, peer, note=note)

    for d in decisions:
        net.schedule(start + d.send_delay, fire, d.peer_address)
    horizon = start + cfg.max_delay + 10 * max(cfg.max_delay, max(d.computed_from for d in decisions)) + 1000.0
    net.run_until(horizon, stop=lambda: len(pids) == len(decisions) and all(net.reply_for(p) for p in pids.values()))
    delivered = {}
    for ev in net.delivery_log:
        if ev.event == "deliver" and ev.packet is not None and ev.packet.kind is PacketKind.ORDER \
                and ev.packet.pid in pids.values():
            delivered.setdefault(ev.packet.dst, ev.time)
    completed = {peer: net.reply_for(pid)[0] for peer, pid in pids.items() if net.reply_for(pid)}
    return BroadcastOutcome(decisions, delivered, completed)


# ---------------------------------------------------------------- DDoS economics

@dataclass
class DdosReport:
    true_rtt: float
    epsilon_ms: float
    delta: float
    # estimate after each assessment while the attack runs
    attack_estimates: list = field(default_factory=list)
    attack_observed: list = field(default_factory=list)
    assessments_to_gain_epsilon: int = 0
    recovery_estimates: list = field(default_factory=list)
    control_estimate_after_one: float = math.nan


def _alice_net(seed: int):
    net = build_topology(alice_bob_topology(), rng_seed=seed)
    return net, SimTransport(net), SimClock(net)


def ddos_economics(epsilon_ms: float = 20.0, delta: float = 0.1, max_interval_s: float = 180.0,
                   seed: int = 0, max_assessments: int = 100_000) -> DdosReport:
    """Alice floods her own gateway by ``epsilon_ms`` per forwarded packet.

    Bob starts with an exact estimate of Alice and keeps assessing at random
    intervals. Alice keeps the flood running until Bob's estimate has
    grown by ``epsilon_ms``, then stops; Bob assesses until the estimate
    returns to the truth. A control Bob that adopts every observation is
    attacked the same way for a single assessment.
    """
    est_cfg = EstimateConfig(delta=delta, mode=Mode.STRICT, probes_per_ttl=1)
    cfg = SchedulerConfig(max_interval=max_interval_s, estimate_config=est_cfg)

    net, transport, clock = _alice_net(seed)
    truth = net.ground_truth_rtt(ALICE)
    report = DdosReport(truth, epsilon_ms, delta)
    odin = Odin(cfg, transport, clock, rng=random.Random(seed))
    state = odin.add_peer(ALICE)
    state.rtt_est = truth
    flood = net.install_adversary(AdversaryConfig(AdversaryKind.ROUTER_DDOS, "GW-A", epsilon_ms=epsilon_ms,
                                                  active_window=(net.clock, None)))
    target = truth + epsilon_ms
    while len(report.attack_estimates) < max_assessments:
        odin.step()
        report.attack_estimates.append(state.rtt_est)
        report.attack_observed.append(state.history[-1][1].observed)
        if state.rtt_est >= target - 1e-9:
            break
    report.assessments_to_gain_epsilon = len(report.attack_estimates)
    net.set_adversary_window(flood, net.adversaries[flood].active_window[0], net.clock)
    while len(report.recovery_estimates) < max_assessments:
        odin.step()
        report.recovery_estimates.append(state.rtt_est)
        if state.rtt_est <= truth + 1e-9:
            break

    cnet, ctransport, cclock = _alice_net(seed)
    control = Odin(cfg, ctransport, cclock, rng=random.Random(seed), update=adopt_observed)
    cstate = control.add_peer(ALICE)
    cstate.rtt_est = truth
    cnet.install_adversary(AdversaryConfig(AdversaryKind.ROUTER_DDOS, "GW-A", epsilon_ms=epsilon_ms,
                                           active_window=(cnet.clock, None)))
    control.step()
    report.control_estimate_after_one = cstate.rtt_est
    return report


@dataclass
class ExposureReport:
    true_rtt: float
    # fraction of order instants at which Bob's estimate of Alice exceeded the truth by > margin
    inflated_fraction: float
    max_inflation: float
    assessments: int


def toggling_attack_exposure(update: Callable = update_estimate, epsilon_ms: float = 20.0, delta: float = 0.1,
                             period_s: float = 180.0, cycles: int = 40, seed: int = 0,
                             order_every_s: float = 1.0, margin_ms: float = 1e-9) -> ExposureReport:
    """Alice floods for ``period_s``, rests for ``period_s``, repeatedly.

    Orders go out every ``order_every_s``; for each one we check whether
    Bob's current estimate of Alice exceeds her true RTT by more than
    ``margin_ms``, i.e. whether Bob under-delays her by that much.
    """
    est_cfg = EstimateConfig(delta=delta, mode=Mode.STRICT, probes_per_ttl=1)
    cfg = SchedulerConfig(max_interval=period_s, estimate_config=est_cfg)
    net, transport, clock = _alice_net(seed)
    truth = net.ground_truth_rtt(ALICE)
    for k in range(cycles):
        on = 2 * k * period_s * 1000.0
        net.install_adversary(AdversaryConfig(AdversaryKind.ROUTER_DDOS, "GW-A", epsilon_ms=epsilon_ms,
                                              active_window=(on, on + period_s * 1000.0)))
    timeline = [(0.0, truth)]
    odin = Odin(cfg, transport, clock, rng=random.Random(seed), update=update,
                on_assessment=lambda st, res: timeline.append((clock.now(), st.rtt_est)))
    odin.add_peer(ALICE).rtt_est = truth
    horizon = 2 * cycles * period_s
    assessments = odin.run_for(horizon)

    inflated = 0
    worst = 0.0
    n_orders = int(horizon / order_every_s)
    j = 0
    for i in range(n_orders):
        t = i * order_every_s
        while j + 1 < len(timeline) and timeline[j + 1][0] <= t:
            j += 1
        excess = timeline[j][1] - truth
        worst = max(worst, excess)
        if excess > margin_ms:
            inflated += 1
    return ExposureReport(truth, inflated / n_orders, worst, assessments)


# ---------------------------------------------------------------- scenario files

SCENARIO_KEYS = {"seed", "topology", "adversaries", "config", "peers", "script"}


def shipped_scenario_path():
    return resources.files("odinrtt").joinpath("data", "alice_bob.json")


def load_scenario(path) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    unknown = set(doc) - SCENARIO_KEYS
    if unknown:
        raise ValueError(f"scenario: unknown keys {sorted(unknown)}")
    return doc


def run_scenario(doc: dict, seed: Optional[int] = None) -> tuple:
    """Execute a scenario document under virtual time; returns (SimNet, step results).

    Script steps, run in order::

        {"op": "advance", "seconds": s}
        {"op": "odin", "seconds": s}          every peer's assessment loop
        {"op": "broadcast", "note": "..."}    one latency-equalized message
        {"op": "ping" | "trace", "addr": a}
        {"op": "estimate", "addr": a, "mode": "strict"}
        {"op": "adversary", "adversary": {...}}
        {"op": "adversary_window", "index": i, "start_s": s, "end_s": s | null}
    """
    seed = doc.get("seed", 0) if seed is None else seed
    net = build_topology(topology_from_dict(doc["topology"]), doc.get("adversaries", ()), rng_seed=seed)
    transport = SimTransport(net)
    clock = SimClock(net)
    cfg = config_from_dict(doc.get("config", {}))
    rng = random.Random(seed)
    odin = Odin(cfg, transport, clock, rng=rng)
    for p in doc.get("peers", []):
        odin.add_peer(p)

    results = []
    for step in doc.get("script", []):
        op = step["op"]
        t = net.clock
        if op == "advance":
            clock.sleep(float(step["seconds"]))
            out = None
        elif op == "odin":
            out = {"assessments": odin.run_for(float(step["seconds"])),
                   "estimates": {a: s.rtt_est for a, s in odin.peers.items()}}
        elif op == "broadcast":
            b = simulate_broadcast(net, odin.peers.values(), cfg, note=step.get("note", "order"))
            out = {"decisions": [d.to_dict() for d in b.decisions], "completed": b.completed,
                   "delivered": b.delivered, "completion_spread_ms": b.completion_spread}
        elif op == "ping":
            out = {"rtt_ms": ping(step["addr"], transport)}
        elif op == "trace":
            out = trace_route(step["addr"], transport).to_dict()
        elif op == "estimate":
            mode = Mode(step.get("mode", cfg.estimate_config.mode))
            ecfg = replace(cfg.estimate_config, mode=mode)
            state = odin.peers.get(step["addr"]) or PeerRttState.initial(step["addr"], ecfg)
            out = estimate_rtt(step["addr"], state, ecfg, transport, rng=rng).to_dict()
        elif op == "adversary":
            out = {"index": net.install_adversary(AdversaryConfig.from_dict(step["adversary"]))}
        elif op == "adversary_window":
            end = step.get("end_s")
            net.set_adversary_window(int(step["index"]), float(step["start_s"]) * 1000.0,
                                     None if end is None else float(end) * 1000.0)
            out = None
        else:
            raise ValueError(f"unknown script op {op!r}")
        results.append({"op": op, "t_ms": t, "result": out})
    return net, results
