"""Probe transport over real OS sockets (raw ICMP, optional UDP probes)."""

from __future__ import annotations

import itertools
import logging
import os
import select
import socket
import threading
import time
from typing import Optional

from odinrtt.errors import TransportUnavailable
from odinrtt.probe.packets import (
    ICMP_DEST_UNREACH,
    ICMP_ECHO_REPLY,
    ICMP_TIME_EXCEEDED,
    IPPROTO_ICMP,
    IPPROTO_UDP,
    IcmpMessage,
    build_echo_request,
    parse_icmp,
)
from odinrtt.probe.types import UDP_BASE_PORT, HopKind, ProbeReply, Protocol, parse_ipv4

logger = logging.getLogger(__name__)

REMEDIATION = (
    "raw ICMP sockets need elevated privileges: run as root, or grant the "
    "interpreter CAP_NET_RAW (e.g. `sudo setcap cap_net_raw+ep $(readlink -f $(which python3))`)"
)


def _open_raw_icmp() -> socket.socket:
    try:
        return socket.socket(socket.AF_INET, socket.SOCK_RAW, socket.IPPROTO_ICMP)
    except PermissionError as exc:
        raise TransportUnavailable(REMEDIATION) from exc
    except OSError as exc:
        raise TransportUnavailable(f"cannot open raw ICMP socket: {exc}") from exc


class LiveTransport:
    """Sends real TTL-limited probes.

    Every probe gets its own raw receive socket, so concurrent probes for
    different ttls are safe: each one filters the ICMP stream for its own
    (identifier, sequence) or (source port, destination port) pair. The ICMP
    identifier and the UDP source port are fixed for the transport's
    lifetime to keep per-flow load balancers on one path.
    """

    def __init__(self, ident: Optional[int] = None):
        self.ident = ident if ident is not None else os.getpid() & 0xFFFF
        self._seq = itertools.count(1)
        self._seq_lock = threading.Lock()
        self._udp_lock = threading.Lock()
        self._udp: Optional[socket.socket] = None
        self._closed = False
        # fail fast: surface missing privileges at construction time
        _open_raw_icmp().close()

    def _next_seq(self) -> int:
        with self._seq_lock:
            return next(self._seq) & 0xFFFF

    def _udp_socket(self) -> socket.socket:
        if self._udp is None:
            self._udp = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
            self._udp.bind(("", 0))
        return self._udp

    def probe(self, destination: str, ttl: int, protocol: Protocol, timeout_ms: float) -> Optional[ProbeReply]:
        if self._closed:
            raise TransportUnavailable("transport is closed")
        destination = parse_ipv4(destination)
        recv = _open_raw_icmp()
        try:
            if Protocol(protocol) is Protocol.ICMP_ECHO:
                seq = self._next_seq()
                recv.setsockopt(socket.IPPROTO_IP, socket.IP_TTL, ttl)
                sent = time.perf_counter_ns()
                recv.sendto(build_echo_request(self.ident, seq), (destination, 0))
                match = lambda m: self._match_echo(m, destination, seq)  # noqa: E731
            else:
                dport = UDP_BASE_PORT + ttl
                with self._udp_lock:
                    udp = self._udp_socket()
                    sport = udp.getsockname()[1]
                    udp.setsockopt(socket.IPPROTO_IP, socket.IP_TTL, ttl)
                    sent = time.perf_counter_ns()
                    udp.sendto(b"odinrtt", (destination, dport))
                match = lambda m: self._match_udp(m, destination, sport, dport)  # noqa: E731
            return self._await(recv, sent, timeout_ms, match)
        except OSError as exc:
            if isinstance(exc, PermissionError):
                raise TransportUnavailable(REMEDIATION) from exc
            logger.debug("probe to %s ttl=%d failed: %s", destination, ttl, exc)
            return None
        finally:
            recv.close()

    def _await(self, sock, sent_ns, timeout_ms, match) -> Optional[ProbeReply]:
        deadline = sent_ns + int(timeout_ms * 1e6)
        while True:
            remaining = (deadline - time.perf_counter_ns()) / 1e9
            if remaining <= 0:
                return None
            ready, _, _ = select.select([sock], [], [], remaining)
            if not ready:
                return None
            packet, _ = sock.recvfrom(2048)
            arrived = time.perf_counter_ns()
            msg = parse_icmp(packet)
            if msg is None:
                continue
            kind = match(msg)
            if kind is not None:
                return ProbeReply(msg.source, (arrived - sent_ns) / 1e6, kind)

    def _match_echo(self, msg: IcmpMessage, destination: str, seq: int) -> Optional[HopKind]:
        if msg.ident != self.ident or msg.seq != seq:
            return None
        if msg.icmp_type == ICMP_ECHO_REPLY and msg.source == destination:
            return HopKind.DEST_REACHED
        if msg.quoted_protocol != IPPROTO_ICMP or msg.quoted_destination != destination:
            return None
        return _classify_error(msg, destination)

    @staticmethod
    def _match_udp(msg: IcmpMessage, destination: str, sport: int, dport: int) -> Optional[HopKind]:
        if msg.quoted_protocol != IPPROTO_UDP or msg.quoted_destination != destination:
            return None
        if (msg.quoted_sport, msg.quoted_dport) != (sport, dport):
            return None
        return _classify_error(msg, destination)

    def close(self) -> None:
        self._closed = True
        if self._udp is not None:
            self._udp.close()
            self._udp = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _classify_error(msg: IcmpMessage, destination: str) -> Optional[HopKind]:
    if msg.icmp_type == ICMP_TIME_EXCEEDED:
        return HopKind.TIME_EXCEEDED
    if msg.icmp_type == ICMP_DEST_UNREACH:
        # port unreachable from the target itself is how UDP probes finish
        return HopKind.DEST_REACHED if msg.source == destination else HopKind.UNREACHABLE
    return None
