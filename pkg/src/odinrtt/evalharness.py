"""Accuracy evaluation: paired target/neighbor measurements and error histograms."""

from __future__ import annotations

import bisect
import csv
import ipaddress
import json
import logging
import math
import random
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional, Sequence

from odinrtt.errors import EmptySampleSet, OdinError, ZeroActual
from odinrtt.estimator import EstimateConfig, EstimateResult, Mode, PeerRttState, estimate_rtt
from odinrtt.probe import HopKind, ProbeTransport, parse_ipv4, ping, same_slash24, trace_route

logger = logging.getLogger(__name__)

HEADLINE_THRESHOLDS = (0.005, 0.15)
BIN_WIDTH = 0.005
BIN_RANGE = 0.30


@dataclass(frozen=True)
class SamplePair:
    target_a: str
    neighbor_b: str
    rtt_a_actual: float
    estimate: EstimateResult
    mode: Mode

    def __post_init__(self):
        if not same_slash24(self.target_a, self.neighbor_b) or self.target_a == self.neighbor_b:
            raise ValueError("target and neighbor must be distinct members of one /24")

    @property
    def error(self) -> float:
        return relative_error(self.estimate.observed, self.rtt_a_actual)


@dataclass(frozen=True)
class Bin:
    low: float
    high: float
    count: int


@dataclass
class ErrorHistogram:
    bins: list
    total: int
    within_threshold: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if sum(b.count for b in self.bins) != self.total:
            raise ValueError("bin counts do not add up to total")
        for prev, nxt in zip(self.bins, self.bins[1:]):
            if prev.high != nxt.low:
                raise ValueError("bins must be contiguous and ordered")


def relative_error(estimate: float, actual: float) -> float:
    """Signed (estimate - actual) / actual; underestimates are negative."""
    if actual == 0:
        raise ZeroActual("actual RTT is zero")
    return (estimate - actual) / actual


def default_edges(width: float = BIN_WIDTH, span: float = BIN_RANGE) -> list:
    n = int(round(span / width))
    inner = [round(k * width, 10) for k in range(-n, n + 1)]
    return [-math.inf] + inner + [math.inf]


def build_histogram(errors: Sequence[float], edges: Optional[Sequence[float]] = None,
                    thresholds: Sequence[float] = HEADLINE_THRESHOLDS) -> ErrorHistogram:
    """Bin signed errors into half-open [low, high) bins; edge bins are open-ended."""
    edges = list(edges) if edges is not None else default_edges()
    counts = [0] * (len(edges) - 1)
    for e in errors:
        counts[min(bisect.bisect_right(edges, e) - 1, len(counts) - 1)] += 1
    bins = [Bin(edges[i], edges[i + 1], c) for i, c in enumerate(counts)]
    total = len(errors)
    within = {t: (sum(1 for e in errors if abs(e) <= t) / total if total else 0.0) for t in thresholds}
    return ErrorHistogram(bins, total, within)


def _fmt_edge(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def emit_histogram_csv(hist: ErrorHistogram, path) -> None:
    """Write bin_low,bin_high,count,fraction rows in bin order."""
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_low", "bin_high", "count", "fraction"])
            for b in hist.bins:
                frac = b.count / hist.total if hist.total else 0.0
                w.writerow([_fmt_edge(b.low), _fmt_edge(b.high), b.count, repr(frac)])
    except OSError as exc:
        raise OdinError(f"IO_FAILURE writing {path}: {exc}") from exc


def read_histogram_csv(path) -> ErrorHistogram:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    bins = [Bin(float(r["bin_low"]), float(r["bin_high"]), int(r["count"])) for r in rows]
    return ErrorHistogram(bins, sum(b.count for b in bins))


def summary(hist: ErrorHistogram, mode: Mode, seed: Optional[int] = None) -> dict:
    return {
        "total": hist.total,
        "within_0.5pct": hist.within_threshold.get(0.005, 0.0),
        "within_15pct": hist.within_threshold.get(0.15, 0.0),
        "mode": Mode(mode).value,
        "seed": seed,
    }


@dataclass
class EvalReport:
    samples: list
    histogram: ErrorHistogram
    failures: list

    @property
    def errors(self) -> list:
        return [s.error for s in self.samples]


def _estimate_sample(target: str, actual: float, mode: Mode, cfg: EstimateConfig, transport, rng) -> SamplePair:
    cfg = replace(cfg, mode=Mode(mode))
    result = estimate_rtt(target, PeerRttState.initial(target, cfg), cfg, transport, rng=rng)
    return SamplePair(target, result.probed_address, actual, result, mode)


def _finish(samples, failures) -> EvalReport:
    if not samples:
        raise EmptySampleSet(f"no sample succeeded ({len(failures)} failures)")
    hist = build_histogram([s.error for s in samples])
    return EvalReport(samples, hist, failures)


def run_simulated_evaluation(n_samples: int, mode: Mode, sampler, seed: int = 0,
                             cfg: Optional[EstimateConfig] = None, net_seed_offset: int = 0) -> EvalReport:
    """Evaluate on ``n_samples`` independently drawn simulated topologies.

    ``sampler.draw(rng)`` returns (TopologySpec, target). Ground truth comes
    from the simulator; every target is ping-gated first.
    """
    from odinrtt.simnet import SimTransport, build_topology

    cfg = cfg or EstimateConfig(probes_per_ttl=1)
    rng = random.Random(seed)
    samples, failures = [], []
    for i in range(n_samples):
        spec, target = sampler.draw(rng)
        net = build_topology(spec, rng_seed=seed * 100_003 + i + net_seed_offset)
        transport = SimTransport(net)
        if ping(target, transport, timeout_ms=cfg.timeout_ms) is None:
            failures.append((target, "ping failed"))
            continue
        try:
            samples.append(_estimate_sample(target, net.ground_truth_rtt(target), mode, cfg, transport, rng))
        except OdinError as exc:
            failures.append((target, repr(exc)))
    return _finish(samples, failures)


def run_evaluation(targets: Iterable[str], mode: Mode, transport: ProbeTransport,
                   cfg: Optional[EstimateConfig] = None, rng=None,
                   actual_rtt: Optional[Callable[[str], float]] = None,
                   rate_limit_s: float = 0.0) -> EvalReport:
    """Ping-gate each target, measure its actual RTT, estimate it via a neighbor.

    ``actual_rtt`` supplies ground truth (the simulator's); without it the
    target is traced and its DEST_REACHED hop RTT is used, as on the live
    internet. Per-target failures are collected, not raised.
    """
    cfg = cfg or EstimateConfig()
    samples, failures = [], []
    for i, target in enumerate(targets):
        if i and rate_limit_s > 0:
            time.sleep(rate_limit_s)
        target = parse_ipv4(target)
        if ping(target, transport, timeout_ms=cfg.timeout_ms) is None:
            failures.append((target, "ping failed"))
            continue
        if actual_rtt is not None:
            actual = actual_rtt(target)
        else:
            trace = trace_route(target, transport, protocol=cfg.protocol, timeout_ms=cfg.timeout_ms,
                                probes_per_ttl=cfg.probes_per_ttl, max_ttl=cfg.max_ttl)
            final = trace.hops[-1]
            if final.kind is not HopKind.DEST_REACHED or final.responder != target:
                failures.append((target, "trace did not reach target"))
                continue
            actual = final.rtt
        try:
            samples.append(_estimate_sample(target, actual, mode, cfg, transport, rng))
        except OdinError as exc:
            failures.append((target, repr(exc)))
    return _finish(samples, failures)


def random_public_ipv4(rng) -> str:
    """Uniform over globally routable unicast IPv4 (no private, reserved or multicast)."""
    while True:
        addr = ipaddress.IPv4Address(rng.randrange(1 << 32))
        if addr.is_global and not addr.is_multicast and not addr.is_reserved:
            return str(addr)


def write_summary(report: EvalReport, mode: Mode, path, seed: Optional[int] = None) -> None:
    with open(path, "w") as fh:
        json.dump(summary(report.histogram, mode, seed), fh, sort_keys=True, indent=2)
