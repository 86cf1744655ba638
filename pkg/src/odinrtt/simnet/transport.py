"""ProbeTransport backed by a SimNet, advancing its virtual clock."""

from __future__ import annotations

from typing import Optional

from odinrtt.probe.types import HopKind, ProbeReply, Protocol, parse_ipv4
from odinrtt.simnet.net import PacketKind, SimNet


class SimTransport:
    """Each probe runs the event queue until its reply lands or the timeout passes.

    Not thread-safe: callers serialize access, as with the SimNet itself.
    """

    def __init__(self, net: SimNet):
        self.net = net

    def probe(self, destination: str, ttl: int, protocol: Protocol, timeout_ms: float) -> Optional[ProbeReply]:
        destination = parse_ipv4(destination)
        kind = PacketKind.ECHO_REQUEST if Protocol(protocol) is Protocol.ICMP_ECHO else PacketKind.UDP_PROBE
        net = self.net
        sent_at = net.clock
        pid = net.send(kind, destination, ttl)
        net.run_until(sent_at + timeout_ms, stop=lambda: net.reply_for(pid) is not None)
        got = net.reply_for(pid)
        if got is None:
            return None
        arrived, reply = got
        if reply.kind is PacketKind.TIME_EXCEEDED:
            hop = HopKind.TIME_EXCEEDED
        elif reply.src == destination:
            hop = HopKind.DEST_REACHED
        else:
            hop = HopKind.UNREACHABLE
        return ProbeReply(reply.src, arrived - sent_at, hop)

    def close(self) -> None:
        pass


class SimClock:
    """Clock interface (seconds) over a SimNet's millisecond virtual time."""

    def __init__(self, net: SimNet):
        self.net = net

    def now(self) -> float:
        return self.net.clock / 1000.0

    def sleep(self, seconds: float) -> None:
        self.net.advance_clock(seconds * 1000.0)
