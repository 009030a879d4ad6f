"""Closed-loop HTTP load, paced heartbeat ingestion, and fleet population.

The HTTP load is closed-loop: each worker issues back-to-back requests on a
persistent connection for the duration, so a concurrency level means that
many requests in flight, matching how the service is benchmarked. Only
requests that complete inside the measurement window are recorded.
"""
from __future__ import annotations

import http.client
import json
import threading
import time
import urllib.request
from dataclasses import dataclass
from statistics import fmean
from urllib.parse import urlsplit

from ..config import DEFAULTS
from ..wire import Heartbeat, encode_heartbeat
from .analysis import percentile
from .synth import BENCH_CLIENT_IP, SynthAgent

DRAIN_TIMEOUT_S = 60.0


@dataclass(frozen=True)
class LoadReport:
    concurrency: int
    duration_s: float
    requests: int
    errors: int
    rps: float
    mean_ms: float
    p50_ms: float
    p95_ms: float


@dataclass(frozen=True)
class IngestReport:
    rate_per_min: int
    duration_s: float
    sent: int
    applied: int
    dropped: int
    malformed: int


def _host_port(base_url: str) -> tuple[str, int]:
    url = urlsplit(base_url)
    if url.scheme != "http" or not url.hostname:
        raise ValueError(f"expected an http:// URL, got {base_url!r}")
    return url.hostname, url.port or 80


def get_json(base_url: str, path: str, timeout: float = 10.0):
    with urllib.request.urlopen(base_url.rstrip("/") + path, timeout=timeout) as resp:
        return json.loads(resp.read())


def get_stats(base_url: str) -> dict:
    return get_json(base_url, "/api/stats")


class _HttpWorker(threading.Thread):
    def __init__(self, host: str, port: int, path: str, headers: dict[str, str],
                 start_gate: threading.Event):
        super().__init__(daemon=True)
        self._host = host
        self._port = port
        self._path = path
        self._headers = headers
        self.deadline = 0.0  # assigned after start, before the gate opens
        self._gate = start_gate
        self.latencies_ms: list[float] = []
        self.errors = 0

    def run(self) -> None:
        conn = http.client.HTTPConnection(self._host, self._port, timeout=30)
        self._gate.wait()
        try:
            while True:
                started = time.perf_counter()
                if started >= self.deadline:
                    return
                try:
                    conn.request("GET", self._path, headers=self._headers)
                    response = conn.getresponse()
                    response.read()
                    status = response.status
                except (OSError, http.client.HTTPException):
                    conn.close()
                    conn = http.client.HTTPConnection(self._host, self._port, timeout=30)
                    self.errors += 1
                    continue
                finished = time.perf_counter()
                if finished > self.deadline:
                    return  # completed outside the window: not recorded
                self.latencies_ms.append((finished - started) * 1000.0)
                if status != 200:
                    self.errors += 1
        finally:
            conn.close()


def run_http_load(base_url: str, concurrency: int, duration_s: float, *,
                  count: int = 5, client_ip: str | None = BENCH_CLIENT_IP) -> LoadReport:
    """Hammer /nearest with `concurrency` closed-loop workers for duration_s.

    ``client_ip`` is sent as X-Forwarded-For so a server configured to trust
    it ranks against a synthetic client location; pass None to omit it.
    """
    if concurrency < 1:
        raise ValueError("concurrency must be >= 1")
    host, port = _host_port(base_url)
    path = f"/nearest?count={count}"
    headers = {"X-Forwarded-For": client_ip} if client_ip else {}
    gate = threading.Event()
    workers = [_HttpWorker(host, port, path, headers, gate)
               for _ in range(concurrency)]
    for w in workers:
        w.start()
    deadline = time.perf_counter() + duration_s
    for w in workers:
        w.deadline = deadline
    gate.set()
    for w in workers:
        w.join()
    latencies = [ms for w in workers for ms in w.latencies_ms]
    errors = sum(w.errors for w in workers)
    if latencies:
        report = LoadReport(
            concurrency=concurrency,
            duration_s=duration_s,
            requests=len(latencies),
            errors=errors,
            rps=len(latencies) / duration_s,
            mean_ms=fmean(latencies),
            p50_ms=percentile(latencies, 50),
            p95_ms=percentile(latencies, 95),
        )
    else:
        report = LoadReport(concurrency, duration_s, 0, errors, 0.0, 0.0, 0.0, 0.0)
    return report


class _Publisher:
    """Keep-alive POSTer for heartbeat bodies."""

    def __init__(self, base_url: str,
                 exchange: str | None = None, routing_key: str | None = None):
        self._host, self._port = _host_port(base_url)
        exchange = exchange or DEFAULTS["broker.exchange"]
        routing_key = routing_key or DEFAULTS["broker.routing_key"]
        self._path = f"/publish/{exchange}/{routing_key}"
        self._conn: http.client.HTTPConnection | None = None

    def post(self, body: bytes) -> bool:
        for attempt in (1, 2):
            if self._conn is None:
                self._conn = http.client.HTTPConnection(self._host, self._port, timeout=10)
            try:
                self._conn.request("POST", self._path, body=body,
                                   headers={"Content-Type": "application/json"})
                response = self._conn.getresponse()
                response.read()
                return response.status == 204
            except (OSError, http.client.HTTPException):
                self._conn.close()
                self._conn = None
        return False

    def close(self) -> None:
        if self._conn is not None:
            self._conn.close()
            self._conn = None


def _heartbeat_body(agent: SynthAgent) -> bytes:
    return encode_heartbeat(Heartbeat(
        id=agent.id, hostname=agent.hostname, public_ip=agent.public_ip,
        port=agent.port, load=agent.load, timestamp=time.time(), interval_s=30))


def populate(base_url: str, fleet: list[SynthAgent], *,
             exchange: str | None = None, routing_key: str | None = None,
             settle_timeout_s: float = 60.0) -> int:
    """Register the fleet through real heartbeat publishes; returns tracked count.

    Blocks until the server's registry has absorbed the whole queue (or the
    settle timeout passes). Populating the same fleet again is idempotent.
    """
    publisher = _Publisher(base_url, exchange, routing_key)
    try:
        for agent in fleet:
            if not publisher.post(_heartbeat_body(agent)):
                raise RuntimeError(f"publish failed for {agent.id}")
    finally:
        publisher.close()
    deadline = time.monotonic() + settle_timeout_s
    while time.monotonic() < deadline:
        stats = get_stats(base_url)
        if stats["queue_depth"] == 0 and stats["tracked"] >= len(fleet):
            return stats["tracked"]
        time.sleep(0.05)
    raise TimeoutError(f"registry did not settle at {len(fleet)} records "
                       f"within {settle_timeout_s}s")


def run_ingest_load(base_url: str, rate_per_min: int, duration_s: float,
                    fleet: list[SynthAgent], *,
                    exchange: str | None = None,
                    routing_key: str | None = None) -> IngestReport:
    """Publish heartbeats at a fixed rate, then account for every message.

    Pacing is deadline-based: message k is sent at t0 + k * (60/rate). After
    the run the consumer is given time to drain, and applied/dropped/
    malformed are read from the server's counter deltas.
    """
    if rate_per_min < 1:
        raise ValueError("rate_per_min must be >= 1")
    if not fleet:
        raise ValueError("fleet must be non-empty")
    before = get_stats(base_url)
    total = round(rate_per_min * duration_s / 60.0)
    period = 60.0 / rate_per_min
    publisher = _Publisher(base_url, exchange, routing_key)
    sent = 0
    t0 = time.perf_counter()
    try:
        for k in range(total):
            target = t0 + k * period
            delay = target - time.perf_counter()
            if delay > 0:
                time.sleep(delay)
            if publisher.post(_heartbeat_body(fleet[k % len(fleet)])):
                sent += 1
    finally:
        publisher.close()

    deadline = time.monotonic() + DRAIN_TIMEOUT_S
    after = get_stats(base_url)
    while after["queue_depth"] > 0 and time.monotonic() < deadline:
        time.sleep(0.1)
        after = get_stats(base_url)
    return IngestReport(
        rate_per_min=rate_per_min,
        duration_s=duration_s,
        sent=sent,
        applied=after["heartbeats_total"] - before["heartbeats_total"],
        dropped=after["queue_dropped_total"] - before["queue_dropped_total"],
        malformed=after["malformed_total"] - before["malformed_total"],
    )
