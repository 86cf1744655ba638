"""Declarative network description, JSON (de)serialization and random generators.

JSON layout::

    {
      "vantage": "V",
      "routers": [{"id": "V", "addresses": ["192.0.2.1"]}, ...],
      "links": [{"endpoint_a": "V", "endpoint_b": "R1",
                 "one_way_latency_ms": 5.0, "jitter_ms": 0.0}, ...],
      "subnets": [{"cidr": "203.0.113.0/24", "gateway_router": "R3",
                   "hosts": [{"last_octet": 7, "reachable": true,
                              "one_way_last_hop_ms": 1.0}, ...],
                   "default_host": {"reachable": true, "one_way_last_hop_ms": 1.0}}]
    }

``vantage`` names the router the prober sits on and defaults to the first
router. A host may give a full ``address`` instead of ``last_octet``. The
optional ``default_host`` fills every octet not listed in ``hosts``.
Unknown keys are rejected at every level.
"""

from __future__ import annotations

import ipaddress
import json
import random
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

from odinrtt.errors import InvalidTopology


@dataclass(frozen=True)
class RouterSpec:
    id: str
    addresses: tuple = ()


@dataclass(frozen=True)
class LinkSpec:
    endpoint_a: str
    endpoint_b: str
    one_way_latency_ms: float
    jitter_ms: float = 0.0


@dataclass(frozen=True)
class HostSpec:
    last_octet: int
    reachable: bool = True
    one_way_last_hop_ms: float = 0.0


@dataclass(frozen=True)
class SubnetSpec:
    cidr: str
    gateway_router: str
    hosts: tuple = ()
    default_host: Optional[HostSpec] = None

    @property
    def prefix(self) -> str:
        return self.cidr.split("/")[0].rsplit(".", 1)[0]

    def host_address(self, host: HostSpec) -> str:
        return f"{self.prefix}.{host.last_octet}"

    def all_hosts(self) -> tuple:
        """Declared hosts plus, when ``default_host`` is set, one per remaining octet."""
        if self.default_host is None:
            return self.hosts
        listed = {h.last_octet for h in self.hosts}
        d = self.default_host
        extra = tuple(HostSpec(o, d.reachable, d.one_way_last_hop_ms) for o in range(256) if o not in listed)
        return tuple(sorted(self.hosts + extra, key=lambda h: h.last_octet))


@dataclass(frozen=True)
class TopologySpec:
    routers: tuple
    links: tuple = ()
    subnets: tuple = ()
    vantage: Optional[str] = None

    @property
    def vantage_id(self) -> str:
        if self.vantage is not None:
            return self.vantage
        if not self.routers:
            raise InvalidTopology("topology has no routers")
        return self.routers[0].id

    def to_dict(self) -> dict:
        out = {
            "vantage": self.vantage_id,
            "routers": [{"id": r.id, "addresses": list(r.addresses)} for r in self.routers],
            "links": [asdict(link) for link in self.links],
            "subnets": [],
        }
        for s in self.subnets:
            d = {"cidr": s.cidr, "gateway_router": s.gateway_router, "hosts": [asdict(h) for h in s.hosts]}
            if s.default_host is not None:
                d["default_host"] = {"reachable": s.default_host.reachable,
                                     "one_way_last_hop_ms": s.default_host.one_way_last_hop_ms}
            out["subnets"].append(d)
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


_TOP_KEYS = {"vantage", "routers", "links", "subnets"}
_ROUTER_KEYS = {"id", "addresses"}
_LINK_KEYS = {"endpoint_a", "endpoint_b", "one_way_latency_ms", "jitter_ms"}
_SUBNET_KEYS = {"cidr", "gateway_router", "hosts", "default_host"}
_DEFAULT_HOST_KEYS = {"reachable", "one_way_last_hop_ms"}
_HOST_KEYS = {"last_octet", "address", "reachable", "one_way_last_hop_ms"}


def _check_keys(obj, allowed, where, required=()):
    if not isinstance(obj, dict):
        raise InvalidTopology(f"{where}: expected an object, got {type(obj).__name__}")
    unknown = set(obj) - allowed
    if unknown:
        raise InvalidTopology(f"{where}: unknown keys {sorted(unknown)}")
    missing = [k for k in required if k not in obj]
    if missing:
        raise InvalidTopology(f"{where}: missing keys {missing}")


def _parse_host(raw, cidr, where) -> HostSpec:
    _check_keys(raw, _HOST_KEYS, where)
    if ("last_octet" in raw) == ("address" in raw):
        raise InvalidTopology(f"{where}: give exactly one of last_octet or address")
    if "address" in raw:
        try:
            addr = ipaddress.IPv4Address(raw["address"])
        except ValueError as exc:
            raise InvalidTopology(f"{where}: bad address {raw['address']!r}") from exc
        try:
            net = ipaddress.IPv4Network(cidr)
        except ValueError as exc:
            raise InvalidTopology(f"{where}: bad cidr {cidr!r}") from exc
        if addr not in net:
            raise InvalidTopology(f"{where}: host {addr} is outside subnet {cidr}")
        octet = int(str(addr).rsplit(".", 1)[1])
    else:
        octet = raw["last_octet"]
    return HostSpec(
        last_octet=octet,
        reachable=bool(raw.get("reachable", True)),
        one_way_last_hop_ms=float(raw.get("one_way_last_hop_ms", 0.0)),
    )


def topology_from_dict(doc: dict) -> TopologySpec:
    """Parse the JSON document form; structural validation happens in validate_topology."""
    _check_keys(doc, _TOP_KEYS, "topology", required=("routers",))
    routers = []
    for i, r in enumerate(doc["routers"]):
        _check_keys(r, _ROUTER_KEYS, f"routers[{i}]", required=("id",))
        routers.append(RouterSpec(id=str(r["id"]), addresses=tuple(r.get("addresses", ()))))
    links = []
    for i, link in enumerate(doc.get("links", [])):
        _check_keys(link, _LINK_KEYS, f"links[{i}]", required=("endpoint_a", "endpoint_b", "one_way_latency_ms"))
        links.append(LinkSpec(str(link["endpoint_a"]), str(link["endpoint_b"]),
                              float(link["one_way_latency_ms"]), float(link.get("jitter_ms", 0.0))))
    subnets = []
    for i, s in enumerate(doc.get("subnets", [])):
        _check_keys(s, _SUBNET_KEYS, f"subnets[{i}]", required=("cidr", "gateway_router"))
        hosts = tuple(_parse_host(h, s["cidr"], f"subnets[{i}].hosts[{j}]") for j, h in enumerate(s.get("hosts", [])))
        default = None
        if s.get("default_host") is not None:
            _check_keys(s["default_host"], _DEFAULT_HOST_KEYS, f"subnets[{i}].default_host")
            default = HostSpec(-1, bool(s["default_host"].get("reachable", True)),
                               float(s["default_host"].get("one_way_last_hop_ms", 0.0)))
        subnets.append(SubnetSpec(cidr=s["cidr"], gateway_router=str(s["gateway_router"]), hosts=hosts,
                                  default_host=default))
    return TopologySpec(routers=tuple(routers), links=tuple(links), subnets=tuple(subnets), vantage=doc.get("vantage"))


def load_topology(path) -> TopologySpec:
    with open(path) as fh:
        return topology_from_dict(json.load(fh))


def validate_topology(spec: TopologySpec) -> None:
    """Raise InvalidTopology unless ``spec`` is well-formed and connected."""
    ids = [r.id for r in spec.routers]
    if not ids:
        raise InvalidTopology("topology has no routers")
    if len(set(ids)) != len(ids):
        raise InvalidTopology("duplicate router id")
    if spec.vantage_id not in ids:
        raise InvalidTopology(f"vantage {spec.vantage_id!r} is not a router")

    seen = {}

    def claim(addr, owner):
        try:
            addr = str(ipaddress.IPv4Address(addr))
        except ValueError as exc:
            raise InvalidTopology(f"{owner}: invalid address {addr!r}") from exc
        if addr in seen:
            raise InvalidTopology(f"duplicate address {addr} ({seen[addr]} and {owner})")
        seen[addr] = owner

    for r in spec.routers:
        for a in r.addresses:
            claim(a, f"router {r.id}")

    adjacency = {i: set() for i in ids}
    for link in spec.links:
        for end in (link.endpoint_a, link.endpoint_b):
            if end not in adjacency:
                raise InvalidTopology(f"link endpoint {end!r} is not a router")
        if link.endpoint_a == link.endpoint_b:
            raise InvalidTopology(f"self-loop on {link.endpoint_a!r}")
        if link.one_way_latency_ms < 0 or link.jitter_ms < 0:
            raise InvalidTopology("link latency and jitter must be >= 0")
        adjacency[link.endpoint_a].add(link.endpoint_b)
        adjacency[link.endpoint_b].add(link.endpoint_a)

    reach = {spec.vantage_id}
    stack = [spec.vantage_id]
    while stack:
        for nxt in adjacency[stack.pop()]:
            if nxt not in reach:
                reach.add(nxt)
                stack.append(nxt)

    cidrs = set()
    for s in spec.subnets:
        try:
            net = ipaddress.IPv4Network(s.cidr)
        except ValueError as exc:
            raise InvalidTopology(f"bad subnet {s.cidr!r}: {exc}") from exc
        if net.prefixlen != 24:
            raise InvalidTopology(f"subnet {s.cidr} is not a /24")
        if s.cidr in cidrs:
            raise InvalidTopology(f"duplicate subnet {s.cidr}")
        cidrs.add(s.cidr)
        if s.gateway_router not in adjacency:
            raise InvalidTopology(f"subnet {s.cidr}: unknown gateway {s.gateway_router!r}")
        if s.gateway_router not in reach:
            raise InvalidTopology(f"subnet {s.cidr}: gateway {s.gateway_router!r} unreachable from vantage")
        if s.default_host is not None and s.default_host.one_way_last_hop_ms < 0:
            raise InvalidTopology(f"subnet {s.cidr}: negative default last-hop latency")
        if len({h.last_octet for h in s.hosts}) != len(s.hosts):
            raise InvalidTopology(f"subnet {s.cidr}: duplicate host")
        for h in s.hosts:
            if not 0 <= h.last_octet <= 255:
                raise InvalidTopology(f"subnet {s.cidr}: last octet {h.last_octet} out of range")
            if h.one_way_last_hop_ms < 0:
                raise InvalidTopology(f"subnet {s.cidr}: negative last-hop latency")
            claim(s.host_address(h), f"host in {s.cidr}")


# ---------------------------------------------------------------- generators

def _unique_octets(rng: random.Random, used: set, width: int = 2) -> tuple:
    while True:
        t = tuple(rng.randrange(256) for _ in range(width))
        if t not in used:
            used.add(t)
            return t


def random_tree(
    seed_or_rng,
    n_routers: int = 20,
    n_subnets: int = 5,
    hosts_per_subnet: int = 8,
    link_latency_ms: tuple = (1.0, 10.0),
    last_hop_ms: tuple = (0.2, 3.0),
    host_spread_ms: float = 0.0,
    reachable_fraction: float = 1.0,
    jitter_ms: float = 0.0,
) -> TopologySpec:
    """Random router tree rooted at the vantage ``R0`` with /24 subnets on random routers.

    Each subnet draws one base last-hop latency from ``last_hop_ms``; every
    host then gets base + uniform(-host_spread_ms, +host_spread_ms), floored
    at 0. With host_spread_ms=0 all hosts in a subnet are equidistant.
    """
    rng = seed_or_rng if isinstance(seed_or_rng, random.Random) else random.Random(seed_or_rng)
    router_octets: set = set()
    routers = []
    links = []
    for i in range(n_routers):
        a, b = _unique_octets(rng, router_octets)
        routers.append(RouterSpec(id=f"R{i}", addresses=(f"172.16.{a}.{b}",)))
        if i:
            parent = rng.randrange(i)
            links.append(LinkSpec(f"R{parent}", f"R{i}", round(rng.uniform(*link_latency_ms), 6), jitter_ms))
    subnet_octets: set = set()
    subnets = []
    candidates = [r.id for r in routers[1:]] or [routers[0].id]
    hosts_per_subnet = min(hosts_per_subnet, 256)
    for _ in range(n_subnets):
        a, b = _unique_octets(rng, subnet_octets)
        base = rng.uniform(*last_hop_ms)
        octets = rng.sample(range(256), hosts_per_subnet)
        hosts = tuple(
            HostSpec(o, rng.random() < reachable_fraction,
                     max(0.0, round(base + rng.uniform(-host_spread_ms, host_spread_ms), 6)))
            for o in sorted(octets)
        )
        subnets.append(SubnetSpec(f"10.{a}.{b}.0/24", rng.choice(candidates), hosts))
    return TopologySpec(tuple(routers), tuple(links), tuple(subnets), vantage="R0")


def chain_topology(
    link_latencies: Sequence[float],
    hosts: Sequence[HostSpec] = (),
    cidr: str = "203.0.113.0/24",
    jitter_ms: float = 0.0,
) -> TopologySpec:
    """Vantage ``V`` followed by routers R1..Rn on a line; one subnet behind Rn."""
    routers = [RouterSpec("V", ("192.0.2.1",))]
    links = []
    prev = "V"
    for i, lat in enumerate(link_latencies, start=1):
        routers.append(RouterSpec(f"R{i}", (f"198.51.100.{i}",)))
        links.append(LinkSpec(prev, f"R{i}", float(lat), jitter_ms))
        prev = f"R{i}"
    subnets = (SubnetSpec(cidr, prev, tuple(hosts)),) if link_latencies else ()
    return TopologySpec(tuple(routers), tuple(links), subnets, vantage="V")


@dataclass
class PathSampler:
    """Draws single-path topologies sized like typical internet paths.

    One-way vantage-to-gateway latency is uniform in ``path_one_way_ms`` and
    split at random across ``hops`` links. The target /24 is either fully
    populated (``populate_subnet``) or holds only the target host.
    """

    path_one_way_ms: tuple = (15.0, 25.0)
    hops: tuple = (3, 8)
    last_hop_ms: tuple = (0.5, 3.0)
    host_spread_ms: float = 0.0
    populate_subnet: bool = True
    neighbors_reachable: bool = True
    jitter_ms: float = 0.0

    def draw(self, rng: random.Random) -> tuple:
        """Return (TopologySpec, target address)."""
        n = rng.randint(*self.hops)
        total = rng.uniform(*self.path_one_way_ms)
        weights = [rng.uniform(0.2, 1.0) for _ in range(n)]
        scale = total / sum(weights)
        latencies = [w * scale for w in weights]
        base = rng.uniform(*self.last_hop_ms)
        target_octet = rng.randrange(256)
        subnet_a, subnet_b, subnet_c = rng.randrange(1, 224), rng.randrange(256), rng.randrange(256)
        cidr = f"{subnet_a}.{subnet_b}.{subnet_c}.0/24"
        if subnet_a in (192, 198) or (subnet_a, subnet_b, subnet_c) == (203, 0, 113):
            cidr = f"10.{subnet_b}.{subnet_c}.0/24"

        def last_hop():
            return max(0.0, base + rng.uniform(-self.host_spread_ms, self.host_spread_ms)) if self.host_spread_ms else base

        hosts = []
        octets = range(256) if self.populate_subnet else [target_octet]
        for o in octets:
            reachable = True if o == target_octet else self.neighbors_reachable
            hosts.append(HostSpec(o, reachable, last_hop()))
        spec = chain_topology(latencies, hosts, cidr=cidr, jitter_ms=self.jitter_ms)
        prefix = cidr.split("/")[0].rsplit(".", 1)[0]
        return spec, f"{prefix}.{target_octet}"


__all__ = [
    "HostSpec",
    "LinkSpec",
    "PathSampler",
    "RouterSpec",
    "SubnetSpec",
    "TopologySpec",
    "chain_topology",
    "load_topology",
    "random_tree",
    "topology_from_dict",
    "validate_topology",
]
