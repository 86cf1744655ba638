"""ICMP packet construction and parsing for the live transport."""

from __future__ import annotations

import socket
import struct
from dataclasses import dataclass
from typing import Optional

ICMP_ECHO_REPLY = 0
ICMP_DEST_UNREACH = 3
ICMP_ECHO_REQUEST = 8
ICMP_TIME_EXCEEDED = 11

IPPROTO_ICMP = 1
IPPROTO_UDP = 17


def inet_checksum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\x00"
    total = sum(struct.unpack(f"!{len(data) // 2}H", data))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def build_echo_request(ident: int, seq: int, payload: bytes = b"odinrtt-probe") -> bytes:
    """Echo request whose checksum does not depend on ``seq``.

    The first payload word is the ones' complement of ``seq``, so the
    (id, checksum) pair that per-flow load balancers hash stays constant
    while the sequence number still identifies the probe.
    """
    balance = ~seq & 0xFFFF
    body = struct.pack("!H", balance) + payload
    header = struct.pack("!BBHHH", ICMP_ECHO_REQUEST, 0, 0, ident, seq)
    csum = inet_checksum(header + body)
    return struct.pack("!BBHHH", ICMP_ECHO_REQUEST, 0, csum, ident, seq) + body


@dataclass(frozen=True)
class IcmpMessage:
    source: str
    icmp_type: int
    code: int
    # echo reply: the reply's own id/seq; errors: fields of the quoted probe
    ident: Optional[int] = None
    seq: Optional[int] = None
    quoted_protocol: Optional[int] = None
    quoted_destination: Optional[str] = None
    quoted_sport: Optional[int] = None
    quoted_dport: Optional[int] = None


def parse_icmp(packet: bytes) -> Optional[IcmpMessage]:
    """Parse an IPv4 datagram carrying ICMP, as read from a raw socket."""
    if len(packet) < 20:
        return None
    ihl = (packet[0] & 0x0F) * 4
    if packet[9] != IPPROTO_ICMP or len(packet) < ihl + 8:
        return None
    source = socket.inet_ntoa(packet[12:16])
    icmp = packet[ihl:]
    icmp_type, code = icmp[0], icmp[1]
    if icmp_type == ICMP_ECHO_REPLY:
        ident, seq = struct.unpack("!HH", icmp[4:8])
        return IcmpMessage(source, icmp_type, code, ident=ident, seq=seq)
    if icmp_type not in (ICMP_TIME_EXCEEDED, ICMP_DEST_UNREACH):
        return IcmpMessage(source, icmp_type, code)
    inner = icmp[8:]
    if len(inner) < 20:
        return IcmpMessage(source, icmp_type, code)
    inner_ihl = (inner[0] & 0x0F) * 4
    proto = inner[9]
    dest = socket.inet_ntoa(inner[16:20])
    quoted = inner[inner_ihl:inner_ihl + 8]
    if len(quoted) < 8:
        return IcmpMessage(source, icmp_type, code, quoted_protocol=proto, quoted_destination=dest)
    if proto == IPPROTO_ICMP:
        ident, seq = struct.unpack("!HH", quoted[4:8])
        return IcmpMessage(source, icmp_type, code, ident=ident, seq=seq,
                           quoted_protocol=proto, quoted_destination=dest)
    if proto == IPPROTO_UDP:
        sport, dport = struct.unpack("!HH", quoted[0:4])
        return IcmpMessage(source, icmp_type, code, quoted_protocol=proto,
                           quoted_destination=dest, quoted_sport=sport, quoted_dport=dport)
    return IcmpMessage(source, icmp_type, code, quoted_protocol=proto, quoted_destination=dest)
