"""Deterministic discrete-event network under a virtual millisecond clock."""

from __future__ import annotations

import enum
import heapq
import itertools
import json
import random
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from odinrtt.errors import InvalidTopology, UnknownAddress, UnknownTarget
from odinrtt.simnet.topology import TopologySpec, validate_topology

REPLY_TTL = 64


class PacketKind(str, enum.Enum):
    ECHO_REQUEST = "ECHO_REQUEST"
    ECHO_REPLY = "ECHO_REPLY"
    UDP_PROBE = "UDP_PROBE"
    PORT_UNREACHABLE = "PORT_UNREACHABLE"
    TIME_EXCEEDED = "TIME_EXCEEDED"
    ORDER = "ORDER"
    ACK = "ACK"


REQUEST_KINDS = (PacketKind.ECHO_REQUEST, PacketKind.UDP_PROBE, PacketKind.ORDER)


class AdversaryKind(str, enum.Enum):
    RESPONSE_DELAY = "RESPONSE_DELAY"
    FORGED_HOP = "FORGED_HOP"
    ROUTER_DDOS = "ROUTER_DDOS"


@dataclass(frozen=True)
class Packet:
    kind: PacketKind
    src: str
    dst: str
    ttl: int = REPLY_TTL
    pid: int = 0
    # ttl the request left the vantage with; replies inherit it from the request
    sent_ttl: int = REPLY_TTL
    # for replies: pid of the request being answered
    reply_to: Optional[int] = None
    note: Optional[str] = None

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "src": self.src, "dst": self.dst, "ttl": self.ttl, "pid": self.pid}
        if self.reply_to is not None:
            d["reply_to"] = self.reply_to
        if self.note is not None:
            d["note"] = self.note
        return d


@dataclass(frozen=True)
class LogEvent:
    time: float
    node: str
    event: str
    packet: Optional[Packet] = None
    detail: Optional[str] = None

    def to_dict(self) -> dict:
        d = {"t": self.time, "node": self.node, "event": self.event}
        if self.packet is not None:
            d["pkt"] = self.packet.to_dict()
        if self.detail is not None:
            d["detail"] = self.detail
        return d


@dataclass
class AdversaryConfig:
    """One active adversary.

    RESPONSE_DELAY and FORGED_HOP target a host address; ROUTER_DDOS targets
    a router id (or one of its addresses). Every kind acts only during the
    half-open virtual-time window ``[start, end)`` in ms; ``end=None`` means
    forever.
    """

    kind: AdversaryKind
    target: str
    extra_ms: float = 0.0
    claimed_address: Optional[str] = None
    at_ttl: Optional[int] = None
    epsilon_ms: float = 0.0
    active_window: tuple = (0.0, None)

    def __post_init__(self):
        self.kind = AdversaryKind(self.kind)
        start, end = self.active_window
        self.active_window = (float(start), None if end is None else float(end))
        if self.kind is AdversaryKind.FORGED_HOP and (self.claimed_address is None or self.at_ttl is None):
            raise ValueError("FORGED_HOP needs claimed_address and at_ttl")

    def active(self, t: float) -> bool:
        start, end = self.active_window
        return start <= t and (end is None or t < end)

    @classmethod
    def from_dict(cls, d: dict) -> "AdversaryConfig":
        allowed = {"kind", "target", "extra_ms", "claimed_address", "at_ttl", "epsilon_ms", "active_window"}
        unknown = set(d) - allowed
        if unknown:
            raise ValueError(f"adversary: unknown keys {sorted(unknown)}")
        d = dict(d)
        if "active_window" in d:
            d["active_window"] = tuple(d["active_window"])
        return cls(**d)

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "target": self.target, "active_window": list(self.active_window)}
        if self.kind is AdversaryKind.RESPONSE_DELAY:
            d["extra_ms"] = self.extra_ms
        elif self.kind is AdversaryKind.FORGED_HOP:
            d.update(claimed_address=self.claimed_address, at_ttl=self.at_ttl)
        else:
            d["epsilon_ms"] = self.epsilon_ms
        return d


@dataclass(frozen=True)
class _Host:
    address: str
    gateway: str
    reachable: bool
    last_hop_ms: float


@dataclass(order=True)
class _Event:
    time: float
    seq: int
    action: Callable = field(compare=False)
    args: tuple = field(compare=False, default=())


class SimNet:
    """A routed network with a single vantage point, adversaries and an event queue.

    Build one with :func:`build_topology`. All traffic originates at the
    vantage; requests follow the latency-shortest path and replies retrace
    it. Events at equal virtual time fire in insertion order.
    """

    def __init__(self, topology: TopologySpec, rng_seed: int = 0):
        validate_topology(topology)
        self.topology = topology
        self.rng_seed = rng_seed
        self.rng = random.Random(rng_seed)
        self.clock = 0.0
        self.delivery_log: list = []
        self.adversaries: list = []
        self._queue: list = []
        self._seq = itertools.count()
        self._pids = itertools.count(1)
        self._replies: dict = {}

        self.vantage = topology.vantage_id
        self.router_addr = {}
        self._addr_owner = {}
        for r in topology.routers:
            if not r.addresses:
                raise InvalidTopology(f"router {r.id!r} has no address")
            self.router_addr[r.id] = r.addresses[0]
            for a in r.addresses:
                self._addr_owner[a] = r.id
        self.vantage_address = self.router_addr[self.vantage]

        self._links = {}
        for link in topology.links:
            self._links[(link.endpoint_a, link.endpoint_b)] = link
            self._links[(link.endpoint_b, link.endpoint_a)] = link

        self.hosts = {}
        self._subnet_gateway = {}
        for s in topology.subnets:
            self._subnet_gateway[s.prefix] = s.gateway_router
            for h in s.all_hosts():
                addr = s.host_address(h)
                self.hosts[addr] = _Host(addr, s.gateway_router, h.reachable, h.one_way_last_hop_ms)

        self._dist, self._parent = self._shortest_paths()

    # ------------------------------------------------------------ routing

    def _shortest_paths(self):
        adjacency = {r.id: [] for r in self.topology.routers}
        for (a, b), link in sorted(self._links.items()):
            adjacency[a].append((b, link.one_way_latency_ms))
        dist = {self.vantage: 0.0}
        parent = {self.vantage: None}
        heap = [(0.0, self.vantage)]
        done = set()
        while heap:
            d, node = heapq.heappop(heap)
            if node in done:
                continue
            done.add(node)
            for nxt, lat in adjacency[node]:
                nd = d + lat
                if nxt not in dist or nd < dist[nxt] or (nd == dist[nxt] and node < parent[nxt]):
                    dist[nxt] = nd
                    parent[nxt] = node
                    heapq.heappush(heap, (nd, nxt))
        return dist, parent

    def router_path(self, router_id: str) -> list:
        """Router ids from the vantage (inclusive) to ``router_id``."""
        path = []
        node = router_id
        while node is not None:
            path.append(node)
            node = self._parent[node]
        return path[::-1]

    def route_to(self, dst: str) -> Optional[list]:
        """Node labels a request to ``dst`` traverses, or None when unroutable.

        A trailing None marks an address inside a known /24 with no host
        behind it; the gateway drops such packets.
        """
        if dst in self._addr_owner:
            return self.router_path(self._addr_owner[dst])
        if dst in self.hosts:
            return self.router_path(self.hosts[dst].gateway) + [dst]
        gateway = self._subnet_gateway.get(dst.rsplit(".", 1)[0])
        if gateway is not None:
            return self.router_path(gateway) + [None]
        return None

    def path_nodes(self, dst: str) -> list:
        """Hops a traceroute to ``dst`` would list (vantage excluded)."""
        route = self.route_to(dst)
        if route is None:
            raise UnknownAddress(dst)
        return [n for n in route[1:] if n is not None]

    def node_address(self, node: str) -> str:
        return self.router_addr.get(node, node)

    def ground_truth_rtt(self, addr: str) -> float:
        """2 x one-way latency along the vantage path; jitter and adversaries excluded."""
        if addr in self._addr_owner:
            return 2 * self._dist[self._addr_owner[addr]]
        if addr in self.hosts:
            h = self.hosts[addr]
            return 2 * (self._dist[h.gateway] + h.last_hop_ms)
        raise UnknownAddress(addr)

    def _latency(self, a: str, b: str) -> float:
        if b in self.hosts:
            return self.hosts[b].last_hop_ms
        if a in self.hosts:
            return self.hosts[a].last_hop_ms
        link = self._links[(a, b)]
        if link.jitter_ms > 0:
            return link.one_way_latency_ms + self.rng.uniform(0.0, link.jitter_ms)
        return link.one_way_latency_ms

    # ------------------------------------------------------------ adversaries

    def install_adversary(self, cfg: AdversaryConfig) -> int:
        if cfg.kind is AdversaryKind.ROUTER_DDOS:
            router = self._addr_owner.get(cfg.target, cfg.target)
            if router not in self.router_addr:
                raise UnknownTarget(f"no router {cfg.target!r}")
            cfg.target = router
        elif cfg.target not in self.hosts:
            raise UnknownTarget(f"no host {cfg.target!r}")
        self.adversaries.append(cfg)
        self._log(cfg.target, "adversary_installed", detail=json.dumps(cfg.to_dict(), sort_keys=True))
        return len(self.adversaries) - 1

    def set_adversary_window(self, index: int, start: float, end: Optional[float]) -> None:
        cfg = self.adversaries[index]
        cfg.active_window = (float(start), None if end is None else float(end))
        self._log(cfg.target, "adversary_window", detail=json.dumps(list(cfg.active_window)))

    def _ddos_delay(self, router: str, t: float) -> float:
        return sum(a.epsilon_ms for a in self.adversaries
                   if a.kind is AdversaryKind.ROUTER_DDOS and a.target == router and a.active(t))

    def _host_adversaries(self, host: str, kind: AdversaryKind):
        return [a for a in self.adversaries if a.kind is kind and a.target == host and a.active(self.clock)]

    # ------------------------------------------------------------ events

    def schedule(self, at: float, action: Callable, *args) -> None:
        heapq.heappush(self._queue, _Event(max(at, self.clock), next(self._seq), action, args))

    def run_until(self, t_end: float, stop: Optional[Callable[[], bool]] = None) -> bool:
        """Fire events up to ``t_end``; returns True if ``stop`` ended the run early."""
        while self._queue and self._queue[0].time <= t_end:
            ev = heapq.heappop(self._queue)
            self.clock = ev.time
            ev.action(*ev.args)
            if stop is not None and stop():
                return True
        self.clock = max(self.clock, t_end)
        return False

    def advance_clock(self, dt_ms: float) -> None:
        if dt_ms < 0:
            raise ValueError("cannot move the clock backwards")
        self.run_until(self.clock + dt_ms)

    def _log(self, node: str, event: str, packet: Optional[Packet] = None, detail: Optional[str] = None) -> None:
        self.delivery_log.append(LogEvent(self.clock, node, event, packet, detail))

    # ------------------------------------------------------------ packets

    def send(self, kind: PacketKind, dst: str, ttl: int = REPLY_TTL, note: Optional[str] = None) -> int:
        """Inject a request at the vantage now; returns its packet id."""
        pkt = Packet(kind, self.vantage_address, dst, ttl, next(self._pids), sent_ttl=ttl, note=note)
        self._log(self.vantage, "send", pkt)
        route = self.route_to(dst)
        if route is None or len(route) < 2:
            self._log(self.vantage, "drop", pkt, "no route")
            return pkt.pid
        self._transmit(pkt, route, 0)
        return pkt.pid

    def reply_for(self, pid: int):
        """(arrival time, reply packet) once a reply to ``pid`` reached the vantage."""
        return self._replies.get(pid)

    def _transmit(self, pkt: Packet, route: list, idx: int, extra: float = 0.0) -> None:
        node = route[idx]
        nxt = route[idx + 1]
        delay = extra
        if node in self.router_addr:
            eps = self._ddos_delay(node, self.clock)
            if eps:
                self._log(node, "ddos_delay", pkt, str(eps))
                delay += eps
        if nxt is None:
            self._log(node, "drop", pkt, "no such host")
            return
        self.schedule(self.clock + delay + self._latency(node, nxt), self._arrive, pkt, route, idx + 1)

    def _arrive(self, pkt: Packet, route: list, idx: int) -> None:
        node = route[idx]
        last = idx == len(route) - 1
        if pkt.kind not in REQUEST_KINDS:
            if last:
                self._log(node, "deliver", pkt)
                self._replies.setdefault(pkt.reply_to, (self.clock, pkt))
            else:
                self._log(node, "arrive", pkt)
                self._transmit(pkt, route, idx)
            return

        self._log(node, "arrive", pkt)
        if node in self.hosts:
            self._host_receive(pkt, route, idx)
            return
        if self._addr_owner.get(pkt.dst) == node:
            kind = {PacketKind.ECHO_REQUEST: PacketKind.ECHO_REPLY,
                    PacketKind.UDP_PROBE: PacketKind.PORT_UNREACHABLE,
                    PacketKind.ORDER: PacketKind.ACK}[pkt.kind]
            self._reply(pkt, route, idx, kind, pkt.dst)
            return
        ttl = pkt.ttl - 1
        if ttl <= 0:
            self._reply(pkt, route, idx, PacketKind.TIME_EXCEEDED, self._forged_source(pkt, node) or self.router_addr[node])
            return
        if last:
            self._log(node, "drop", pkt, "no route")
            return
        self._transmit(replace(pkt, ttl=ttl), route, idx)

    def _forged_source(self, pkt: Packet, node: str) -> Optional[str]:
        for adv in self._host_adversaries(pkt.dst, AdversaryKind.FORGED_HOP):
            if adv.at_ttl == pkt.sent_ttl and pkt.kind is not PacketKind.ORDER:
                self._log(pkt.dst, "forge", pkt, adv.claimed_address)
                return adv.claimed_address
        return None

    def _host_receive(self, pkt: Packet, route: list, idx: int) -> None:
        host = self.hosts[pkt.dst]
        if pkt.kind is PacketKind.ORDER:
            self._log(host.address, "deliver", pkt)
        if not host.reachable:
            self._log(host.address, "drop", pkt, "host silent")
            return
        forged = self._forged_source(pkt, host.address)
        if forged is not None:
            self._reply(pkt, route, idx, PacketKind.TIME_EXCEEDED, forged)
            return
        kind = {PacketKind.ECHO_REQUEST: PacketKind.ECHO_REPLY,
                PacketKind.UDP_PROBE: PacketKind.PORT_UNREACHABLE,
                PacketKind.ORDER: PacketKind.ACK}[pkt.kind]
        delay = 0.0
        for adv in self._host_adversaries(host.address, AdversaryKind.RESPONSE_DELAY):
            self._log(host.address, "response_delay", pkt, str(adv.extra_ms))
            delay += adv.extra_ms
        self._reply(pkt, route, idx, kind, host.address, delay)

    def _reply(self, req: Packet, route: list, idx: int, kind: PacketKind, source: str, delay: float = 0.0) -> None:
        back = route[idx::-1]
        reply = Packet(kind, source, self.vantage_address, REPLY_TTL, next(self._pids),
                       sent_ttl=req.sent_ttl, reply_to=req.pid, note=req.note)
        self._log(route[idx], "reply", reply)
        if len(back) == 1:
            self.schedule(self.clock + delay, self._arrive, reply, back, 0)
        else:
            self._transmit(reply, back, 0, delay)

    # ------------------------------------------------------------ output

    def log_lines(self):
        for ev in self.delivery_log:
            yield json.dumps(ev.to_dict(), sort_keys=True, allow_nan=False)

    def dump_log(self, fh) -> None:
        for line in self.log_lines():
            fh.write(line + "\n")


def build_topology(spec: TopologySpec, adversaries=(), rng_seed: int = 0) -> SimNet:
    net = SimNet(spec, rng_seed=rng_seed)
    for adv in adversaries:
        net.install_adversary(adv if isinstance(adv, AdversaryConfig) else AdversaryConfig.from_dict(adv))
    return net


def install_adversary(net: SimNet, cfg: AdversaryConfig) -> int:
    return net.install_adversary(cfg)


def ground_truth_rtt(net: SimNet, addr: str) -> float:
    return net.ground_truth_rtt(addr)


def advance_clock(net: SimNet, dt_ms: float) -> None:
    net.advance_clock(dt_ms)


def deliver(net: SimNet, kind: PacketKind, dst: str, ttl: int = REPLY_TTL, note: Optional[str] = None) -> int:
    return net.send(kind, dst, ttl, note)


__all__ = [
    "AdversaryConfig",
    "AdversaryKind",
    "LogEvent",
    "Packet",
    "PacketKind",
    "SimNet",
    "advance_clock",
    "build_topology",
    "deliver",
    "ground_truth_rtt",
    "install_adversary",
]
