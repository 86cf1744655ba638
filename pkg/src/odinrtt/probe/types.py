"""Data types for TTL-limited path probing."""

from __future__ import annotations

import enum
import ipaddress
from dataclasses import dataclass, field
from typing import Optional, Protocol as TypingProtocol

from odinrtt.errors import InvalidAddress

DEFAULT_MAX_TTL = 30
DEFAULT_TIMEOUT_MS = 1000.0
DEFAULT_PROBES_PER_TTL = 3
UDP_BASE_PORT = 33434


class Protocol(str, enum.Enum):
    ICMP_ECHO = "icmp"
    UDP_HIGH_PORT = "udp"


class HopKind(str, enum.Enum):
    TIME_EXCEEDED = "TIME_EXCEEDED"
    DEST_REACHED = "DEST_REACHED"
    # ICMP destination/host unreachable sent by a router on the path
    UNREACHABLE = "UNREACHABLE"
    TIMEOUT = "TIMEOUT"


def parse_ipv4(addr) -> str:
    """Normalize ``addr`` to dotted-quad form or raise InvalidAddress."""
    try:
        return str(ipaddress.IPv4Address(str(addr).strip()))
    except (ipaddress.AddressValueError, ValueError) as exc:
        raise InvalidAddress(f"not a valid IPv4 address: {addr!r}") from exc


def same_slash24(a: str, b: str) -> bool:
    return a.split(".")[:3] == b.split(".")[:3]


@dataclass(frozen=True)
class ProbeSpec:
    destination: str
    ttl: int = 1
    protocol: Protocol = Protocol.ICMP_ECHO
    timeout_ms: float = DEFAULT_TIMEOUT_MS
    probes_per_ttl: int = DEFAULT_PROBES_PER_TTL
    max_ttl: int = DEFAULT_MAX_TTL

    def __post_init__(self):
        object.__setattr__(self, "destination", parse_ipv4(self.destination))
        object.__setattr__(self, "protocol", Protocol(self.protocol))
        if self.max_ttl < 1:
            raise ValueError("max_ttl must be >= 1")
        if not 1 <= self.ttl <= self.max_ttl:
            raise ValueError(f"ttl must be in [1, {self.max_ttl}], got {self.ttl}")
        if not self.timeout_ms > 0:
            raise ValueError("timeout must be positive")
        if self.probes_per_ttl < 1:
            raise ValueError("probes_per_ttl must be >= 1")


@dataclass(frozen=True)
class ProbeReply:
    """What a transport reports for one answered probe."""

    responder: str
    rtt: float
    kind: HopKind


@dataclass(frozen=True)
class HopRecord:
    ttl: int
    responder: Optional[str] = None
    rtt: Optional[float] = None
    kind: HopKind = HopKind.TIMEOUT

    def __post_init__(self):
        answered = self.kind is not HopKind.TIMEOUT
        if answered != (self.responder is not None) or answered != (self.rtt is not None):
            raise ValueError("responder and rtt must be present iff kind != TIMEOUT")
        if self.rtt is not None and self.rtt < 0:
            raise ValueError("rtt must be >= 0")

    @property
    def timed_out(self) -> bool:
        return self.kind is HopKind.TIMEOUT

    def to_dict(self) -> dict:
        return {"ttl": self.ttl, "responder": self.responder, "rtt": self.rtt, "kind": self.kind.value}


@dataclass(frozen=True)
class TraceResult:
    target: str
    hops: tuple = field(default_factory=tuple)

    @property
    def destination_reached(self) -> bool:
        return any(h.kind is HopKind.DEST_REACHED and h.responder == self.target for h in self.hops)

    @property
    def all_timeouts(self) -> bool:
        """Flag for the ALL_TIMEOUTS outcome: not one ttl got an answer."""
        return all(h.timed_out for h in self.hops)

    def last_responding(self) -> Optional[HopRecord]:
        for hop in reversed(self.hops):
            if not hop.timed_out:
                return hop
        return None

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "destination_reached": self.destination_reached,
            "all_timeouts": self.all_timeouts,
            "hops": [h.to_dict() for h in self.hops],
        }


class ProbeTransport(TypingProtocol):
    """Anything that can send one TTL-limited probe and wait for its answer.

    Implementations must return None on timeout and never fabricate a reply.
    ``probe`` may be called concurrently for distinct ttls on the live
    transport; the simulated one is single-threaded.
    """

    def probe(self, destination: str, ttl: int, protocol: Protocol, timeout_ms: float) -> Optional[ProbeReply]:
        ...

    def close(self) -> None:
        ...
