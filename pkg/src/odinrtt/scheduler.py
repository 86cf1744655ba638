"""Randomized per-peer assessment loops and latency-equalizing send delays."""

from __future__ import annotations

import json
import logging
import secrets
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional, Protocol as TypingProtocol

from odinrtt.errors import NoReachableHop, StrictExhausted
from odinrtt.estimator import (
    EstimateConfig,
    EstimateResult,
    Mode,
    PeerRttState,
    estimate_rtt,
    update_estimate,
)
from odinrtt.probe import ProbeTransport, parse_ipv4

logger = logging.getLogger(__name__)

DEFAULT_MAX_DELAY_MS = 300.0
DEFAULT_MAX_INTERVAL_S = 180.0
# next_assessment_delay draws whole microseconds
_TICKS_PER_S = 1_000_000


@dataclass(frozen=True)
class SchedulerConfig:
    max_delay: float = DEFAULT_MAX_DELAY_MS
    max_interval: float = DEFAULT_MAX_INTERVAL_S
    estimate_config: EstimateConfig = field(default_factory=EstimateConfig)
    enabled: bool = True

    def __post_init__(self):
        if not self.max_delay > 0:
            raise ValueError("max_delay must be > 0")
        if not self.max_interval > 0:
            raise ValueError("max_interval must be > 0")


CONFIG_KEYS = {
    "enabled", "max_delay_ms", "max_interval_s", "delta_ms", "mode",
    "initial_estimate_ms", "strict_max_retries",
}


def config_from_dict(d: dict, base: Optional[SchedulerConfig] = None) -> SchedulerConfig:
    """Build a SchedulerConfig from flat config-file keys, overriding ``base``."""
    unknown = set(d) - CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    base = base or SchedulerConfig()
    est = base.estimate_config
    est = replace(
        est,
        delta=float(d.get("delta_ms", est.delta)),
        mode=Mode(d.get("mode", est.mode)),
        strict_max_retries=int(d.get("strict_max_retries", est.strict_max_retries)),
        initial_estimate=float(d.get("initial_estimate_ms", est.initial_estimate)),
    )
    return SchedulerConfig(
        max_delay=float(d.get("max_delay_ms", base.max_delay)),
        max_interval=float(d.get("max_interval_s", base.max_interval)),
        estimate_config=est,
        enabled=bool(d.get("enabled", base.enabled)),
    )


def load_config(path) -> SchedulerConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))


@dataclass(frozen=True)
class ScheduleDecision:
    peer_address: str
    send_delay: float
    computed_from: float

    def implied_arrival(self, now: float) -> float:
        """When the message's effect completes if ``computed_from`` is the true RTT (ms)."""
        return now + self.send_delay + self.computed_from

    def to_dict(self) -> dict:
        return {"peer": self.peer_address, "send_delay_ms": self.send_delay, "rtt_est_ms": self.computed_from}


def next_assessment_delay(cfg: SchedulerConfig, rng=None) -> float:
    """Seconds until the next assessment, uniform on [0, max_interval)."""
    rng = rng or secrets.SystemRandom()
    ticks = max(1, int(round(cfg.max_interval * _TICKS_PER_S)))
    return rng.randrange(ticks) / _TICKS_PER_S


def broadcast_delay(rtt_est: float, cfg: SchedulerConfig) -> float:
    if rtt_est < 0:
        raise ValueError("rtt_est must be >= 0")
    if not cfg.enabled:
        return 0.0
    if rtt_est > cfg.max_delay:
        logger.warning("rtt estimate %.3f ms exceeds max_delay %.3f ms; send delay clamped to 0", rtt_est, cfg.max_delay)
        return 0.0
    return cfg.max_delay - rtt_est


def schedule_broadcast(peers: Iterable[PeerRttState], cfg: SchedulerConfig, now: float = 0.0) -> list:
    """One ScheduleDecision per peer from an atomic snapshot of each estimate."""
    peers = list(peers)
    if not peers:
        raise ValueError("schedule_broadcast needs at least one peer")
    out = []
    for p in peers:
        est, _ = p.snapshot()
        out.append(ScheduleDecision(p.peer_address, broadcast_delay(est, cfg), est))
    return out


# ---------------------------------------------------------------- clocks

class Clock(TypingProtocol):
    def now(self) -> float: ...

    def sleep(self, seconds: float) -> None: ...


class WallClock:
    """Monotonic wall time; sleeps wake early when ``stop`` is set."""

    def __init__(self, stop: Optional[threading.Event] = None):
        self.stop = stop or threading.Event()

    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        self.stop.wait(seconds)


# ---------------------------------------------------------------- assessment

def assess_once(state: PeerRttState, cfg: SchedulerConfig, transport: ProbeTransport, clock: Clock,
                rng=None, update: Callable = update_estimate) -> Optional[EstimateResult]:
    """One estimate; commits on success, records the failure and keeps the old estimate otherwise."""
    try:
        result = estimate_rtt(state.peer_address, state, cfg.estimate_config, transport, rng=rng, update=update)
    except (NoReachableHop, StrictExhausted) as exc:
        logger.info("assessment of %s failed, keeping %.3f ms: %s", state.peer_address, state.rtt_est, exc)
        state.record_failure(exc, clock.now())
        return None
    state.commit(result, clock.now())
    return result


def run_assessment_loop(
    peer: str,
    state: PeerRttState,
    cfg: SchedulerConfig,
    transport: ProbeTransport,
    clock: Clock,
    rng=None,
    stop: Optional[threading.Event] = None,
    max_assessments: Optional[int] = None,
    update: Callable = update_estimate,
    on_assessment: Optional[Callable] = None,
) -> int:
    """Sleep a random interval, assess, repeat until ``stop`` is set or the budget runs out.

    Returns the number of assessments attempted.
    """
    if not cfg.enabled:
        raise RuntimeError("front-running protection is disabled")
    if parse_ipv4(peer) != state.peer_address:
        raise ValueError("state belongs to another peer")
    rng = rng or secrets.SystemRandom()
    stop = stop or threading.Event()
    done = 0
    while not stop.is_set() and (max_assessments is None or done < max_assessments):
        clock.sleep(next_assessment_delay(cfg, rng))
        if stop.is_set():
            break
        result = assess_once(state, cfg, transport, clock, rng, update)
        done += 1
        if on_assessment is not None:
            on_assessment(state, result)
    return done


class Odin:
    """Front-running protection for a set of peers.

    Each peer has its own randomized assessment schedule. ``run_for`` drives
    all loops cooperatively on one clock (what the simulator needs);
    ``start_threads`` runs one thread per peer against wall time.
    """

    def __init__(self, cfg: SchedulerConfig, transport: ProbeTransport, clock: Clock, rng=None,
                 update: Callable = update_estimate, on_assessment: Optional[Callable] = None):
        self.cfg = cfg
        self.transport = transport
        self.clock = clock
        self.rng = rng or secrets.SystemRandom()
        self.update = update
        self.on_assessment = on_assessment
        self.peers: dict = {}
        self._due: dict = {}
        self._threads: list = []
        self._stop = threading.Event()

    def add_peer(self, addr: str) -> PeerRttState:
        addr = parse_ipv4(addr)
        if addr not in self.peers:
            self.peers[addr] = PeerRttState.initial(addr, self.cfg.estimate_config)
            self._due[addr] = self.clock.now() + next_assessment_delay(self.cfg, self.rng)
        return self.peers[addr]

    def decisions(self, now: Optional[float] = None) -> list:
        return schedule_broadcast(self.peers.values(), self.cfg, self.clock.now() if now is None else now)

    def step(self):
        """Sleep until the earliest due peer, assess it, reschedule it.

        Returns (peer state, EstimateResult or None on failure).
        """
        peer = min(self._due, key=lambda a: self._due[a])
        wait = self._due[peer] - self.clock.now()
        if wait > 0:
            self.clock.sleep(wait)
        state = self.peers[peer]
        result = assess_once(state, self.cfg, self.transport, self.clock, self.rng, self.update)
        if self.on_assessment is not None:
            self.on_assessment(state, result)
        self._due[peer] = self.clock.now() + next_assessment_delay(self.cfg, self.rng)
        return state, result

    def run_for(self, seconds: float) -> int:
        """Run every peer's loop until ``seconds`` from now; returns assessments made."""
        if not self.cfg.enabled:
            return 0
        end = self.clock.now() + seconds
        count = 0
        while self._due and min(self._due.values()) < end:
            self.step()
            count += 1
        remaining = end - self.clock.now()
        if remaining > 0:
            self.clock.sleep(remaining)
        return count

    def start_threads(self) -> None:
        if not self.cfg.enabled:
            return
        for addr, state in self.peers.items():
            t = threading.Thread(
                target=run_assessment_loop,
                args=(addr, state, self.cfg, self.transport, self.clock),
                kwargs=dict(rng=self.rng, stop=self._stop, update=self.update, on_assessment=self.on_assessment),
                name=f"odin-{addr}",
                daemon=True,
            )
            t.start()
            self._threads.append(t)

    def stop(self, timeout: Optional[float] = None) -> None:
        self._stop.set()
        if isinstance(self.clock, WallClock):
            self.clock.stop.set()
        for t in self._threads:
            t.join(timeout)
