"""Command-line entry point: trace, estimate, watch, simulate, eval."""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
import threading
import time

from odinrtt.errors import (
    EmptySampleSet,
    InvalidAddress,
    InvalidTopology,
    NoReachableHop,
    StrictExhausted,
    TransportUnavailable,
)
from odinrtt.estimator import Mode, PeerRttState, estimate_rtt
from odinrtt.probe import Protocol, parse_ipv4, trace_route
from odinrtt.scheduler import Odin, WallClock, config_from_dict, load_config

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_TRANSPORT = 2
EXIT_ESTIMATE = 3

logger = logging.getLogger("odinrtt")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--transport", help="'live' or 'sim:<topology.json>'")
    p.add_argument("--seed", type=int, help="RNG seed (simulated transport only)")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--mode", choices=[m.value for m in Mode])
    p.add_argument("--delta-ms", type=float)
    p.add_argument("--max-delay-ms", type=float)
    p.add_argument("--max-interval-s", type=float)
    p.add_argument("--initial-estimate-ms", type=float)
    p.add_argument("--strict-max-retries", type=int)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="odinrtt", description="Tamper-resistant indirect RTT estimation.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("trace", parents=[common], help="hop-by-hop path to an address")
    p.add_argument("addr")
    p.add_argument("--protocol", choices=[x.value for x in Protocol], default=Protocol.ICMP_ECHO.value)
    p.add_argument("--max-ttl", type=int, default=30)
    p.add_argument("--timeout-ms", type=float, default=1000.0)
    p.add_argument("--probes", type=int, default=3)

    p = sub.add_parser("estimate", parents=[common], help="one indirect RTT estimate")
    p.add_argument("addr")
    p.add_argument("--prior", type=float, help="prior estimate in ms (default: initial estimate)")

    p = sub.add_parser("watch", parents=[common], help="run the assessment loops for a peer list")
    p.add_argument("peers_file", help="one IPv4 address per line")
    p.add_argument("--duration", type=float, help="seconds to run (sim default 600; live: until Ctrl-C)")

    p = sub.add_parser("simulate", parents=[common], help="run a scenario file under virtual time")
    p.add_argument("scenario", nargs="?", help="scenario JSON (default: the bundled Alice/Bob scenario)")
    p.add_argument("--log", help="write the delivery log here instead of stdout")

    p = sub.add_parser("eval", parents=[common], help="accuracy evaluation with error histogram")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--samples", type=int, help="number of random samples")
    group.add_argument("--targets", help="file of target addresses, one per line")
    p.add_argument("--csv", default="histogram.csv")
    p.add_argument("--summary", help="also write a JSON summary here")
    p.add_argument("--allow-live", action="store_true", help="permit probing the live internet")
    p.add_argument("--rate", type=float, default=1.0, help="live mode: seconds between targets")
    p.add_argument("--unreachable-neighbors", action="store_true",
                   help="synthetic mode: only the target answers in its /24")
    return parser


def _settings(args):
    cfg = load_config(args.config) if args.config else None
    overrides = {
        "mode": args.mode, "delta_ms": args.delta_ms, "max_delay_ms": args.max_delay_ms,
        "max_interval_s": args.max_interval_s, "initial_estimate_ms": args.initial_estimate_ms,
        "strict_max_retries": args.strict_max_retries,
    }
    return config_from_dict({k: v for k, v in overrides.items() if v is not None}, base=cfg)


def _transport(args, default="live"):
    """(transport, rng, clock, net) for the selected transport."""
    choice = args.transport or default
    if choice == "live":
        if args.seed is not None:
            raise UsageError("--seed is only allowed with a simulated transport; live randomness stays cryptographic")
        from odinrtt.probe.live import LiveTransport

        return LiveTransport(), None, WallClock(), None
    if choice.startswith("sim:"):
        from odinrtt.simnet import SimClock, SimTransport, build_topology, load_topology

        seed = args.seed if args.seed is not None else 0
        net = build_topology(load_topology(choice[4:]), rng_seed=seed)
        return SimTransport(net), random.Random(seed), SimClock(net), net
    raise UsageError(f"unknown transport {choice!r} (use 'live' or 'sim:<file>')")


def _emit(args, obj, text):
    print(json.dumps(obj, sort_keys=True) if args.json else text)


def cmd_trace(args) -> int:
    addr = parse_ipv4(args.addr)
    transport, *_ = _transport(args)
    result = trace_route(addr, transport, protocol=Protocol(args.protocol), timeout_ms=args.timeout_ms,
                         probes_per_ttl=args.probes, max_ttl=args.max_ttl)
    lines = [f"trace to {addr}", f"{'ttl':>3}  {'responder':<16} {'rtt_ms':>10}  kind"]
    for h in result.hops:
        if h.timed_out:
            lines.append(f"{h.ttl:>3}  {'*':<16} {'*':>10}  {h.kind.value}")
        else:
            lines.append(f"{h.ttl:>3}  {h.responder:<16} {h.rtt:>10.3f}  {h.kind.value}")
    _emit(args, result.to_dict(), "\n".join(lines))
    return EXIT_OK


def cmd_estimate(args) -> int:
    addr = parse_ipv4(args.addr)
    cfg = _settings(args)
    transport, rng, _, _ = _transport(args)
    state = PeerRttState.initial(addr, cfg.estimate_config)
    if args.prior is not None:
        state.rtt_est = args.prior
    result = estimate_rtt(addr, state, cfg.estimate_config, transport, rng=rng)
    text = "\n".join([
        f"target          {addr}",
        f"probed_address  {result.probed_address}",
        f"source_node     {result.source_node}",
        f"source_kind     {result.source_kind.value}",
        f"observed_ms     {result.observed:.3f}",
        f"estimate_ms     {result.estimate:.3f}",
        f"retries_used    {result.retries_used}",
    ])
    _emit(args, result.to_dict(), text)
    return EXIT_OK


def _read_addresses(path):
    with open(path) as fh:
        return [parse_ipv4(line) for line in (ln.split("#")[0].strip() for ln in fh) if line]


def cmd_watch(args) -> int:
    cfg = _settings(args)
    peers = _read_addresses(args.peers_file)
    if not peers:
        raise UsageError("peers file is empty")
    transport, rng, clock, net = _transport(args)

    def report(state, result):
        now = clock.now()
        if result is None:
            row = {"t": now, "peer": state.peer_address, "error": state.failures[-1][1], "rtt_est_ms": state.rtt_est}
            text = f"[{now:10.3f}] {state.peer_address:<15} assessment failed, keeping {state.rtt_est:.3f} ms"
        else:
            row = {"t": now, "peer": state.peer_address, **result.to_dict()}
            text = (f"[{now:10.3f}] {state.peer_address:<15} via {result.source_node:<15} "
                    f"observed {result.observed:8.3f} ms -> est {result.estimate:8.3f} ms")
        _emit(args, row, text)
        _print_decisions(args, odin)

    odin = Odin(cfg, transport, clock, rng=rng, on_assessment=report)
    for p in peers:
        odin.add_peer(p)
    if net is not None:
        odin.run_for(args.duration if args.duration is not None else 600.0)
        return EXIT_OK
    odin.start_threads()
    try:
        if args.duration is not None:
            time.sleep(args.duration)
        else:
            threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        odin.stop(timeout=5)
    return EXIT_OK


def _print_decisions(args, odin):
    decisions = odin.decisions()
    if args.json:
        print(json.dumps({"decisions": [d.to_dict() for d in decisions]}, sort_keys=True))
    else:
        print("  send delays: " + ", ".join(f"{d.peer_address}={d.send_delay:.3f}ms" for d in decisions))


def cmd_simulate(args) -> int:
    from odinrtt.scenarios import load_scenario, run_scenario, shipped_scenario_path

    doc = load_scenario(args.scenario or shipped_scenario_path())
    net, results = run_scenario(doc, seed=args.seed)
    if args.log:
        with open(args.log, "w") as fh:
            net.dump_log(fh)
        for r in results:
            print(json.dumps(r, sort_keys=True))
    else:
        net.dump_log(sys.stdout)
    return EXIT_OK


def cmd_eval(args) -> int:
    from odinrtt import evalharness as eh
    from odinrtt.simnet import PathSampler

    cfg = _settings(args)
    mode = Mode(args.mode or Mode.STRICT)
    if args.transport is None and args.targets is None:
        sampler = PathSampler(populate_subnet=not args.unreachable_neighbors,
                              neighbors_reachable=not args.unreachable_neighbors)
        seed = args.seed if args.seed is not None else 0
        report = eh.run_simulated_evaluation(args.samples or 500, mode, sampler, seed=seed,
                                             cfg=cfg.estimate_config)
    else:
        transport, rng, _, net = _transport(args)
        seed = args.seed
        if net is None and not args.allow_live:
            raise UsageError("live evaluation probes third-party hosts; pass --allow-live to proceed")
        if args.targets:
            targets = _read_addresses(args.targets)
        elif net is not None:
            targets = sorted(net.hosts)[: args.samples or None]
        else:
            import secrets

            gen = secrets.SystemRandom()
            targets = [eh.random_public_ipv4(gen) for _ in range(args.samples or 100)]
        report = eh.run_evaluation(targets, mode, transport, cfg=cfg.estimate_config, rng=rng,
                                   actual_rtt=net.ground_truth_rtt if net is not None else None,
                                   rate_limit_s=0.0 if net is not None else args.rate)
    eh.emit_histogram_csv(report.histogram, args.csv)
    summ = eh.summary(report.histogram, mode, seed)
    if args.summary:
        with open(args.summary, "w") as fh:
            json.dump(summ, fh, sort_keys=True, indent=2)
    text = (f"{summ['total']} samples ({len(report.failures)} failed), mode {summ['mode']}: "
            f"{summ['within_0.5pct']:.1%} within 0.5%, {summ['within_15pct']:.1%} within 15%; "
            f"histogram -> {args.csv}")
    _emit(args, summ, text)
    return EXIT_OK


COMMANDS = {
    "trace": cmd_trace,
    "estimate": cmd_estimate,
    "watch": cmd_watch,
    "simulate": cmd_simulate,
    "eval": cmd_eval,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # --help exits 0; argument errors exit via _Parser.error
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except BrokenPipeError:
        # downstream pager/head closed early
        sys.stderr.close()
        return EXIT_OK
    except (UsageError, InvalidAddress, InvalidTopology, ValueError, OSError) as exc:
        print(f"odinrtt: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TransportUnavailable as exc:
        print(f"odinrtt: transport unavailable: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (NoReachableHop, StrictExhausted, EmptySampleSet) as exc:
        print(f"odinrtt: estimation failed: {exc}", file=sys.stderr)
        return EXIT_ESTIMATE


if __name__ == "__main__":
    sys.exit(main())
