"""Minimal worker-node query tool: nothing beyond the standard library.

Asks the discovery server for the nearest caches and prints a proxy
fallback chain (or a table). Exit codes: 0 success, 1 bad usage,
2 network failure, 3 empty result.
"""
from __future__ import annotations

import argparse
import json
import sys
import urllib.error
import urllib.request

TIMEOUT_S = 5.0

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NETWORK = 2
EXIT_EMPTY = 3


class ClientError(Exception):
    pass


def fetch_nearest(server_url: str, count: int) -> list[dict]:
    """One GET /nearest?count=N; raises ClientError on any network problem."""
    url = f"{server_url.rstrip('/')}/nearest?count={count}"
    try:
        with urllib.request.urlopen(url, timeout=TIMEOUT_S) as response:
            body = response.read()
    except (urllib.error.URLError, OSError, TimeoutError) as exc:
        raise ClientError(f"cannot reach {url}: {exc}") from None
    try:
        entries = json.loads(body)
    except json.JSONDecodeError as exc:
        raise ClientError(f"bad response from {url}: {exc}") from None
    if not isinstance(entries, list):
        raise ClientError(f"bad response from {url}: expected a list")
    return entries


def emit_proxy_string(entries: list[dict]) -> str:
    """Ordered fallback chain, e.g. ``http://h1:3128;http://h2:3128``."""
    return ";".join(f"http://{e['hostname']}:{e['port']}" for e in entries)


def emit_table(entries: list[dict]) -> str:
    header = f"{'HOSTNAME':<32} {'IP':<15} {'PORT':>5} {'DIST_KM':>9} {'LOAD':>7} {'AGE_S':>7}"
    lines = [header]
    for e in entries:
        dist = "n/a" if e.get("distance_km") is None else f"{e['distance_km']:.1f}"
        lines.append(f"{e['hostname']:<32} {e['public_ip']:<15} {e['port']:>5} "
                     f"{dist:>9} {e['load']:>7.2f} {e['last_active_s']:>7.1f}")
    return "\n".join(lines)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's default 2
        raise ClientUsageError(message)


class ClientUsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cachescout-client",
                     description="Query the discovery server for the nearest caches.")
    parser.add_argument("--server", default="http://localhost:8080",
                        help="discovery server base URL (default %(default)s)")
    parser.add_argument("--count", type=int, default=5,
                        help="number of caches to request (default %(default)s)")
    parser.add_argument("--format", choices=("proxy", "table"), default="proxy",
                        help="output format (default %(default)s)")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.count < 1:
            raise ClientUsageError("--count must be >= 1")
    except ClientUsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    try:
        entries = fetch_nearest(args.server, args.count)
    except ClientError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NETWORK

    print(emit_table(entries) if args.format == "table" else emit_proxy_string(entries))
    return EXIT_EMPTY if not entries else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
