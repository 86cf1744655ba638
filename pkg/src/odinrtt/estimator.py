"""Indirect RTT estimation via a randomized /24 neighbor, and the estimate update rule.

The target is never probed. Instead the last octet of its address is
replaced with a cryptographically random value and the resulting neighbor
is traced; the RTT to the neighbor (or, in permissive mode, to the last
router that answered) stands in for the target's RTT. Per-peer estimates
then move by a small fixed step upward and jump straight down, so an
adversary who inflates her latency gains only ``delta`` per assessment.
"""

from __future__ import annotations

import enum
import logging
import secrets
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from odinrtt.errors import NoReachableHop, StrictExhausted
from odinrtt.probe import (
    DEFAULT_MAX_TTL,
    DEFAULT_PROBES_PER_TTL,
    DEFAULT_TIMEOUT_MS,
    HopKind,
    ProbeTransport,
    Protocol,
    TraceResult,
    parse_ipv4,
    trace_route,
)

logger = logging.getLogger(__name__)

DEFAULT_DELTA_MS = 0.1
DEFAULT_INITIAL_ESTIMATE_MS = 0.5
DEFAULT_STRICT_MAX_RETRIES = 8
DEFAULT_GAP_LIMIT = 5
HISTORY_LEN = 64


class Mode(str, enum.Enum):
    STRICT = "strict"
    PERMISSIVE = "permissive"


class SourceKind(str, enum.Enum):
    NEIGHBOR_REACHED = "NEIGHBOR_REACHED"
    LAST_REACHABLE_ROUTER = "LAST_REACHABLE_ROUTER"


@dataclass(frozen=True)
class EstimateConfig:
    delta: float = DEFAULT_DELTA_MS
    mode: Mode = Mode.PERMISSIVE
    strict_max_retries: int = DEFAULT_STRICT_MAX_RETRIES
    initial_estimate: float = DEFAULT_INITIAL_ESTIMATE_MS
    protocol: Protocol = Protocol.ICMP_ECHO
    timeout_ms: float = DEFAULT_TIMEOUT_MS
    probes_per_ttl: int = DEFAULT_PROBES_PER_TTL
    max_ttl: int = DEFAULT_MAX_TTL
    # consecutive silent ttls after which a trace is abandoned (None: walk to max_ttl)
    gap_limit: Optional[int] = DEFAULT_GAP_LIMIT

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "protocol", Protocol(self.protocol))
        if not self.delta > 0:
            raise ValueError("delta must be > 0")
        if self.initial_estimate < 0:
            raise ValueError("initial_estimate must be >= 0")
        if self.strict_max_retries < 1:
            raise ValueError("strict_max_retries must be >= 1")


@dataclass(frozen=True)
class EstimateResult:
    estimate: float
    source_node: str
    source_kind: SourceKind
    probed_address: str
    retries_used: int = 0
    # raw RTT seen this assessment, before the update rule
    observed: Optional[float] = None
    target: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "estimate_ms": self.estimate,
            "observed_ms": self.observed,
            "source_node": self.source_node,
            "source_kind": self.source_kind.value,
            "probed_address": self.probed_address,
            "retries_used": self.retries_used,
        }


@dataclass
class PeerRttState:
    """Smoothed estimate for one peer. One writer (the scheduler), many readers."""

    peer_address: str
    rtt_est: float = DEFAULT_INITIAL_ESTIMATE_MS
    last_assessed: Optional[float] = None
    history: deque = field(default_factory=lambda: deque(maxlen=HISTORY_LEN))
    failures: deque = field(default_factory=lambda: deque(maxlen=HISTORY_LEN))
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    @classmethod
    def initial(cls, peer_address: str, cfg: Optional[EstimateConfig] = None) -> "PeerRttState":
        cfg = cfg or EstimateConfig()
        return cls(parse_ipv4(peer_address), cfg.initial_estimate)

    def commit(self, result: EstimateResult, at: float) -> None:
        with self._lock:
            self.rtt_est = result.estimate
            self.last_assessed = at
            self.history.append((at, result))

    def record_failure(self, error: Exception, at: float) -> None:
        with self._lock:
            self.failures.append((at, repr(error)))

    def snapshot(self) -> tuple:
        """(rtt_est, last_assessed) read atomically."""
        with self._lock:
            return self.rtt_est, self.last_assessed


def update_estimate(prior_est: float, observed: float, delta: float) -> float:
    """Immediate decrease, incremental increase.

    Ties count as an increase, so repeatedly observing exactly the current
    estimate still creeps it upward by ``delta``.
    """
    if observed < prior_est:
        return observed
    return prior_est + delta


def adopt_observed(prior_est: float, observed: float, delta: float) -> float:
    """Naive rule that trusts every measurement in both directions (baseline only)."""
    return observed


def _default_rng():
    return secrets.SystemRandom()


def randomize_last_octet(addr: str, rng=None, exclude=()) -> str:
    """Same /24 as ``addr`` with a random last octet that is never addr's own.

    ``exclude`` lists further octets not to draw (strict mode uses it to
    avoid retrying dead neighbors). ``rng`` needs ``randrange``; draws that
    hit an excluded octet are simply redrawn.
    """
    addr = parse_ipv4(addr)
    prefix, own = addr.rsplit(".", 1)
    banned = {int(own), *exclude}
    if len(banned) >= 256:
        raise ValueError("no octet left to draw")
    rng = rng or _default_rng()
    while True:
        octet = rng.randrange(256)
        if octet not in banned:
            return f"{prefix}.{octet}"


def _trace(addr: str, cfg: EstimateConfig, transport: ProbeTransport) -> TraceResult:
    return trace_route(addr, transport, protocol=cfg.protocol, timeout_ms=cfg.timeout_ms,
                       probes_per_ttl=cfg.probes_per_ttl, max_ttl=cfg.max_ttl, gap_limit=cfg.gap_limit)


def _observe_permissive(trace: TraceResult, target: str):
    for hop in reversed(trace.hops):
        if hop.rtt is None or hop.responder == target:
            continue
        if hop.kind is HopKind.DEST_REACHED and hop.responder == trace.target:
            return hop, SourceKind.NEIGHBOR_REACHED
        return hop, SourceKind.LAST_REACHABLE_ROUTER
    return None, None


def estimate_rtt(
    addr: str,
    prior: PeerRttState,
    cfg: EstimateConfig,
    transport: ProbeTransport,
    rng=None,
    update: Callable[[float, float, float], float] = update_estimate,
) -> EstimateResult:
    """Estimate RTT to ``addr`` without sending it a single packet.

    Raises NoReachableHop when a permissive trace gets no answer at all and
    StrictExhausted when strict mode never reaches a neighbor. Neither case
    touches ``prior``; committing the result is the caller's job.
    """
    target = parse_ipv4(addr)
    rng = rng or _default_rng()

    if cfg.mode is Mode.PERMISSIVE:
        neighbor = randomize_last_octet(target, rng)
        trace = _trace(neighbor, cfg, transport)
        hop, kind = _observe_permissive(trace, target)
        if hop is None:
            raise NoReachableHop(f"no hop answered on the path to {neighbor}")
        retries = 0
    else:
        tried = []
        hop = None
        for attempt in range(cfg.strict_max_retries + 1):
            neighbor = randomize_last_octet(target, rng, exclude=tried)
            tried.append(int(neighbor.rsplit(".", 1)[1]))
            trace = _trace(neighbor, cfg, transport)
            final = trace.hops[-1]
            if final.kind is HopKind.DEST_REACHED and final.responder == neighbor:
                hop, kind, retries = final, SourceKind.NEIGHBOR_REACHED, attempt
                break
            logger.debug("strict: neighbor %s silent (attempt %d)", neighbor, attempt + 1)
        if hop is None:
            raise StrictExhausted(f"no neighbor of {target} answered after {len(tried)} attempts",
                                  attempts=[f"{target.rsplit('.', 1)[0]}.{o}" for o in tried])

    estimate = update(prior.rtt_est, hop.rtt, cfg.delta)
    return EstimateResult(estimate, hop.responder, kind, neighbor, retries, hop.rtt, target)
