"""TTL-limited path probing over a pluggable transport."""

from odinrtt.probe.ops import ping, send_probe, trace_route
from odinrtt.probe.types import (
    DEFAULT_MAX_TTL,
    DEFAULT_PROBES_PER_TTL,
    DEFAULT_TIMEOUT_MS,
    HopKind,
    HopRecord,
    ProbeReply,
    ProbeSpec,
    ProbeTransport,
    Protocol,
    TraceResult,
    parse_ipv4,
    same_slash24,
)

__all__ = [
    "DEFAULT_MAX_TTL",
    "DEFAULT_PROBES_PER_TTL",
    "DEFAULT_TIMEOUT_MS",
    "HopKind",
    "HopRecord",
    "ProbeReply",
    "ProbeSpec",
    "ProbeTransport",
    "Protocol",
    "TraceResult",
    "parse_ipv4",
    "ping",
    "same_slash24",
    "send_probe",
    "trace_route",
]
