"""Command line entry point: server, agent, client, and benchmarks."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict

from .agent import HeartbeatAgent
from .client import main as client_main
from .config import Config, ConfigError
from .server import DiscoveryServer

DEFAULT_SERVER_URL = "http://localhost:8080"
LOAD_COLUMNS = (f"{'CONC':>5} {'REQS':>9} {'ERR':>6} {'RPS':>10} "
                f"{'MEAN_MS':>9} {'P50_MS':>8} {'P95_MS':>8}")


def _load_row(report) -> str:
    return (f"{report.concurrency:>5} {report.requests:>9} {report.errors:>6} "
            f"{report.rps:>10.1f} {report.mean_ms:>9.3f} "
            f"{report.p50_ms:>8.3f} {report.p95_ms:>8.3f}")


def _cmd_server(args) -> int:
    config = Config.load(args.config)
    DiscoveryServer(config).run_forever()
    return 0


def _cmd_agent(args) -> int:
    config = Config.load(args.config)
    agent = HeartbeatAgent(config)
    agent.run(max_ticks=args.ticks)
    return 0


def _cmd_bench_table(args) -> int:
    from .bench import build_fleet, write_locator_table

    fleet = build_fleet(args.n, args.seed)
    write_locator_table(args.out, fleet)
    print(f"wrote locator table for {len(fleet)} caches to {args.out}")
    return 0


def _cmd_bench_populate(args) -> int:
    from .bench import build_fleet, populate

    fleet = build_fleet(args.n, args.seed)
    tracked = populate(args.server, fleet)
    print(f"populated {len(fleet)} caches; server now tracks {tracked}")
    return 0


def _cmd_bench_http(args) -> int:
    from .bench import run_http_load
    from .bench.reporting import append_record

    report = run_http_load(args.server, args.concurrency, args.duration,
                           count=args.count)
    print(LOAD_COLUMNS)
    print(_load_row(report))
    if args.log:
        append_record(args.log, {"kind": "http", "server": args.server,
                                 "count": args.count, **asdict(report)})
    return 0


def _cmd_bench_ingest(args) -> int:
    from .bench import build_fleet, run_ingest_load
    from .bench.reporting import append_record

    fleet = build_fleet(args.n, args.seed)
    report = run_ingest_load(args.server, args.rate, args.duration, fleet)
    print(f"{'RATE/MIN':>9} {'SENT':>8} {'APPLIED':>8} {'DROPPED':>8} {'MALFORMED':>9}")
    print(f"{report.rate_per_min:>9} {report.sent:>8} {report.applied:>8} "
          f"{report.dropped:>8} {report.malformed:>9}")
    if args.log:
        append_record(args.log, {"kind": "ingest", "server": args.server,
                                 **asdict(report)})
    return 0


def _cmd_bench_sweep(args) -> int:
    from .bench import ServerProcess, build_fleet, fit_slope, populate, run_http_load
    from .bench.reporting import append_record

    sizes = sorted({int(part) for part in args.n_list.split(",") if part.strip()})
    if not sizes:
        raise ConfigError(f"--n-list has no sizes: {args.n_list!r}")
    modes = ("off", "on") if args.cache == "both" else (args.cache,)
    print(f"{'N':>7} {'CACHE':<5} " + LOAD_COLUMNS)
    latency_points: dict[str, list[tuple[float, float]]] = {m: [] for m in modes}
    for n in sizes:
        fleet = build_fleet(n, args.seed)
        for mode in modes:
            settings = {"geo.cache_ttl_s": "0" if mode == "off" else "3600",
                        "registry.ttl_s": "86400"}
            with ServerProcess(fleet=fleet, settings=settings) as server:
                populate(server.base_url, fleet)
                run_http_load(server.base_url, args.concurrency,
                              min(1.0, args.duration))  # warm-up, unrecorded
                report = run_http_load(server.base_url, args.concurrency,
                                       args.duration, count=args.count)
            latency_points[mode].append((float(n), report.mean_ms))
            print(f"{n:>7} {mode:<5} " + _load_row(report))
            if args.log:
                append_record(args.log, {"kind": "sweep", "cache": mode,
                                         "n": n, **asdict(report)})
    for mode, points in latency_points.items():
        if len(points) >= 3:
            fit = fit_slope(points)
            print(f"cache {mode}: {fit['slope_ms_per_1000']:+.3f} ms per 1000 caches "
                  f"(r2={fit['r2']:.4f})")
            if args.log:
                append_record(args.log, {"kind": "sweep_fit", "cache": mode,
                                         "n_list": sizes, **fit})
    return 0


def _cmd_bench_report(args) -> int:
    from .bench.reporting import render_report

    result = render_report(args.log, args.out)
    print(f"read {result['records']} records from {args.log}")
    print(f"wrote {result['csv']}")
    for figure in result["figures"]:
        print(f"wrote {figure}")
    return 0


def _add_bench_common(parser: argparse.ArgumentParser, *, fleet: bool) -> None:
    parser.add_argument("--server", default=DEFAULT_SERVER_URL,
                        help="target server base URL (default %(default)s)")
    if fleet:
        parser.add_argument("--n", type=int, default=500,
                            help="synthetic fleet size (default %(default)s)")
        parser.add_argument("--seed", type=int, default=1,
                            help="fleet RNG seed (default %(default)s)")
    parser.add_argument("--log", default="",
                        help="append a JSONL record of the run to this file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cachescout",
        description="Cache discovery: heartbeat registry, geo-ranked lookup, benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("server", help="run the discovery server")
    p.add_argument("--config", default=None, help="key=value config file")
    p.set_defaults(func=_cmd_server)

    p = sub.add_parser("agent", help="run the heartbeat agent")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--ticks", type=int, default=None,
                   help="send this many heartbeats, then exit")
    p.set_defaults(func=_cmd_agent)

    p = sub.add_parser("client", help="query the nearest caches",
                       add_help=False)
    p.add_argument("rest", nargs=argparse.REMAINDER)
    p.set_defaults(func=lambda args: client_main(args.rest))

    bench = sub.add_parser("bench", help="benchmarks and load generation")
    bench_sub = bench.add_subparsers(dest="bench_command", required=True)

    p = bench_sub.add_parser("table", help="write a locator table for a synthetic fleet")
    p.add_argument("--n", type=int, required=True, help="fleet size")
    p.add_argument("--seed", type=int, default=1, help="fleet RNG seed (default %(default)s)")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_bench_table)

    p = bench_sub.add_parser("populate", help="register a synthetic fleet via heartbeats")
    _add_bench_common(p, fleet=True)
    p.set_defaults(func=_cmd_bench_populate)

    p = bench_sub.add_parser("http", help="closed-loop load against /nearest")
    _add_bench_common(p, fleet=False)
    p.add_argument("--concurrency", type=int, default=100,
                   help="worker connections (default %(default)s)")
    p.add_argument("--duration", type=float, default=10.0,
                   help="seconds per run (default %(default)s)")
    p.add_argument("--count", type=int, default=5,
                   help="caches to request per query (default %(default)s)")
    p.set_defaults(func=_cmd_bench_http)

    p = bench_sub.add_parser("ingest", help="paced heartbeat stream with accounting")
    _add_bench_common(p, fleet=True)
    p.add_argument("--rate", type=int, default=10000,
                   help="heartbeats per minute (default %(default)s)")
    p.add_argument("--duration", type=float, default=60.0,
                   help="seconds to sustain the rate (default %(default)s)")
    p.set_defaults(func=_cmd_bench_ingest)

    p = bench_sub.add_parser(
        "sweep", help="latency vs registry size, one fresh server per point")
    p.add_argument("--n-list", default="1000,2000,4000,8000",
                   help="comma-separated registry sizes (default %(default)s)")
    p.add_argument("--concurrency", type=int, default=100,
                   help="worker connections (default %(default)s)")
    p.add_argument("--duration", type=float, default=10.0,
                   help="seconds per point (default %(default)s)")
    p.add_argument("--count", type=int, default=5,
                   help="caches to request per query (default %(default)s)")
    p.add_argument("--seed", type=int, default=1, help="fleet RNG seed (default %(default)s)")
    p.add_argument("--cache", choices=("on", "off", "both"), default="both",
                   help="ranking cache mode(s) to measure (default %(default)s)")
    p.add_argument("--log", default="", help="append JSONL records to this file")
    p.set_defaults(func=_cmd_bench_sweep)

    p = bench_sub.add_parser("report", help="render CSV and charts from a run log")
    p.add_argument("--log", default="bench-runs.jsonl",
                   help="JSONL run log to read (default %(default)s)")
    p.add_argument("--out", default="bench-report",
                   help="output directory (default %(default)s)")
    p.set_defaults(func=_cmd_bench_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv[:1] == ["client"]:
        return client_main(argv[1:])  # owns its usage/network/empty exit codes
    logging.basicConfig(level=logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, RuntimeError, TimeoutError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
