"""send_probe / trace_route / ping on top of any ProbeTransport."""

from __future__ import annotations

import logging
from typing import Optional

from odinrtt.probe.types import (
    DEFAULT_MAX_TTL,
    DEFAULT_PROBES_PER_TTL,
    DEFAULT_TIMEOUT_MS,
    HopKind,
    HopRecord,
    ProbeSpec,
    ProbeTransport,
    Protocol,
    TraceResult,
    parse_ipv4,
)

logger = logging.getLogger(__name__)

PING_TTL = 64


def send_probe(spec: ProbeSpec, transport: ProbeTransport) -> HopRecord:
    """Probe ``spec.destination`` with ``spec.ttl`` and keep the fastest answer."""
    best = None
    for _ in range(spec.probes_per_ttl):
        reply = transport.probe(spec.destination, spec.ttl, spec.protocol, spec.timeout_ms)
        if reply is not None and (best is None or reply.rtt < best.rtt):
            best = reply
    if best is None:
        return HopRecord(ttl=spec.ttl)
    return HopRecord(ttl=spec.ttl, responder=best.responder, rtt=best.rtt, kind=best.kind)


def trace_route(
    addr: str,
    transport: ProbeTransport,
    *,
    protocol: Protocol = Protocol.ICMP_ECHO,
    timeout_ms: float = DEFAULT_TIMEOUT_MS,
    probes_per_ttl: int = DEFAULT_PROBES_PER_TTL,
    max_ttl: int = DEFAULT_MAX_TTL,
    gap_limit: Optional[int] = None,
) -> TraceResult:
    """Walk ttl = 1..max_ttl toward ``addr``, stopping once the destination answers.

    With ``gap_limit`` set, the walk also stops after that many consecutive
    silent ttls. A trace where every ttl timed out is still returned; check
    ``result.all_timeouts``.
    """
    target = parse_ipv4(addr)
    hops = []
    gap = 0
    for ttl in range(1, max_ttl + 1):
        spec = ProbeSpec(target, ttl, protocol, timeout_ms, probes_per_ttl, max_ttl)
        hop = send_probe(spec, transport)
        hops.append(hop)
        if hop.kind is HopKind.DEST_REACHED:
            break
        if hop.kind is HopKind.UNREACHABLE:
            # a router told us the destination does not exist; going deeper is pointless
            break
        gap = gap + 1 if hop.timed_out else 0
        if gap_limit is not None and gap >= gap_limit:
            break
    result = TraceResult(target=target, hops=tuple(hops))
    if result.all_timeouts:
        logger.info("trace to %s: all %d ttls timed out", target, len(hops))
    return result


def ping(addr: str, transport: ProbeTransport, *, timeout_ms: float = DEFAULT_TIMEOUT_MS, count: int = 1) -> Optional[float]:
    """Echo RTT to ``addr`` in ms (minimum over ``count`` echoes), or None."""
    target = parse_ipv4(addr)
    best = None
    for _ in range(count):
        reply = transport.probe(target, PING_TTL, Protocol.ICMP_ECHO, timeout_ms)
        if reply is None or reply.kind is not HopKind.DEST_REACHED or reply.responder != target:
            continue
        if best is None or reply.rtt < best:
            best = reply.rtt
    return best
