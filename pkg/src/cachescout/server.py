"""Central discovery service.

One process hosts everything: the broker ingestion endpoint, the consumer
task applying heartbeats to the registry, the TTL sweep task, and the REST
surface (/nearest, /wpad.dat, the status page, and the /api dumps).
"""
from __future__ import annotations

import html
import json
import logging
import sys
import threading
import time
from datetime import datetime, timezone
from typing import IO
from urllib.parse import unquote

from .broker import Broker, UnknownExchangeError
from .config import Config
from .geo import IpLocator, NearestFinder, haversine_km
from .httpd import HttpServer, Request, Response, text_response
from .registry import CacheRecord, Registry
from .wire import WireError, parse_heartbeat

log = logging.getLogger(__name__)

PAC_TEMPLATE = 'function FindProxyForURL(url, host) {{ return "{chain}"; }}'

STATUS_PAGE = """<!DOCTYPE html>
<html>
<head>
<meta http-equiv="refresh" content="30">
<title>cache discovery status</title>
<style>
body {{ font-family: sans-serif; margin: 2em; }}
table {{ border-collapse: collapse; }}
th, td {{ border: 1px solid #999; padding: 4px 10px; text-align: left; }}
th {{ background: #eee; }}
</style>
</head>
<body>
<h1>Tracked cache servers</h1>
<p>{count} tracked</p>
<table>
<tr><th>hostname</th><th>IP</th><th>distance from server (km)</th>
<th>load</th><th>last heartbeat (s ago)</th></tr>
{rows}
</table>
</body>
</html>
"""


class DiscoveryServer:
    """Wires config, registry, broker, finder, and the HTTP listener."""

    def __init__(self, config: Config | None = None):
        self.config = config or Config()
        table_path = self.config.get("geo.table_path")
        self.locator = IpLocator.from_file(table_path) if table_path else IpLocator()
        self.registry = Registry(resolver=self.locator.resolve)
        self.ttl_s = self.config.get_float("registry.ttl_s")
        self.sweep_period_s = self.config.get_float("registry.sweep_period_s")
        self.finder = NearestFinder(
            self.registry, self.locator,
            cache_ttl_s=self.config.get_float("geo.cache_ttl_s"),
            record_ttl_s=self.ttl_s)

        self.broker = Broker()
        self.exchange = self.config.get("broker.exchange")
        self.queue = self.config.get("broker.queue")
        self.routing_key = self.config.get("broker.routing_key")
        self.broker.declare_exchange(self.exchange)
        self.broker.declare_queue(self.queue, self.config.get_int("broker.queue_capacity"))
        self.broker.bind(self.queue, self.exchange, self.routing_key)

        self.trust_xff = self.config.get_bool("server.trust_xff")
        self._server_coord = None
        server_ip = self.config.get("server.public_ip")
        if server_ip:
            try:
                self._server_coord = self.locator.resolve(server_ip)
            except ValueError:
                log.warning("server.public_ip %r is not a valid IPv4 address", server_ip)

        self._counters_lock = threading.Lock()
        self._heartbeats_total = 0
        self._malformed_total = 0
        self._nearest_requests_total = 0

        self._access_sink = self._open_access_log(self.config.get("server.access_log"))
        self._access_lock = threading.Lock()
        logger = self._access_log if self._access_sink is not None else None
        self._http = HttpServer(self.config.get("server.host"),
                                self.config.get_int("server.port"),
                                self._route, access_logger=logger)
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []

    # ------------------------------------------------------------------
    # lifecycle
    # ------------------------------------------------------------------
    @property
    def port(self) -> int:
        return self._http.port

    @property
    def url(self) -> str:
        host = self._http.host if self._http.host != "0.0.0.0" else "127.0.0.1"
        return f"http://{host}:{self._http.port}"

    def start(self) -> None:
        self._http.start()
        for name, target in (("consume-loop", self._consume_loop),
                             ("sweep-loop", self._sweep_loop)):
            thread = threading.Thread(target=target, name=name, daemon=True)
            thread.start()
            self._threads.append(thread)
        print(f"listening on {self._http.host}:{self._http.port}", flush=True)
        log.info("discovery server on %s:%d (exchange=%s queue=%s key=%s ttl=%.0fs)",
                 self._http.host, self._http.port, self.exchange, self.queue,
                 self.routing_key, self.ttl_s)

    def stop(self) -> None:
        self._stop.set()
        self._http.stop()
        for thread in self._threads:
            thread.join(timeout=3)
        if self._access_sink is not None and self._access_sink is not sys.stderr:
            self._access_sink.close()

    def run_forever(self) -> None:
        self.start()
        try:
            while not self._stop.wait(3600):
                pass
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    # ------------------------------------------------------------------
    # background tasks
    # ------------------------------------------------------------------
    def _consume_loop(self) -> None:
        """Drain the heartbeat queue into the registry until shutdown."""
        while not self._stop.is_set():
            msg = self.broker.consume(self.queue, max_wait=0.5)
            if msg is None:
                continue
            try:
                hb = parse_heartbeat(msg.payload)
            except WireError as exc:
                with self._counters_lock:
                    self._malformed_total += 1
                log.debug("dropping malformed heartbeat: %s", exc)
                continue
            self.registry.upsert(hb, now=time.monotonic())
            with self._counters_lock:
                self._heartbeats_total += 1

    def _sweep_loop(self) -> None:
        while not self._stop.wait(self.sweep_period_s):
            removed = self.registry.sweep_expired(time.monotonic(), self.ttl_s)
            if removed:
                log.info("swept %d expired cache record(s)", len(removed))

    # ------------------------------------------------------------------
    # request handling
    # ------------------------------------------------------------------
    def _route(self, req: Request) -> Response:
        path = req.path
        if path.startswith("/publish/"):
            if req.method != "POST":
                return text_response(405, "method not allowed")
            return self._handle_publish(req)
        if req.method != "GET":
            return text_response(405, "method not allowed")
        if path == "/nearest":
            return self._handle_nearest(req)
        if path == "/wpad.dat":
            return self._handle_wpad(req)
        if path == "/":
            return self._handle_status_page()
        if path == "/api/squids":
            return self._handle_squids()
        if path == "/api/stats":
            return self._handle_stats()
        return text_response(404, "not found")

    def _client_ip(self, req: Request) -> str:
        if self.trust_xff:
            forwarded = req.headers.get("x-forwarded-for")
            if forwarded:
                return forwarded.split(",")[0].strip()
        return req.peer_ip

    def _handle_nearest(self, req: Request) -> Response:
        raw_count = req.query.get("count", "5")
        try:
            count = int(raw_count)
        except ValueError:
            return text_response(400, f"count must be an integer, got {raw_count!r}")
        if not (1 <= count <= 100):
            return text_response(400, "count must be between 1 and 100")
        client_ip = self._client_ip(req)
        now = time.monotonic()
        try:
            records = self.finder.nearest(client_ip, count, now)
            client = self.locator.resolve(client_ip)
        except ValueError:
            return text_response(400, f"malformed client address {client_ip!r}")
        with self._counters_lock:
            self._nearest_requests_total += 1
        rows = [self._nearest_row(r, client, now) for r in records]
        return Response(content_type="application/json",
                        body=json.dumps(rows).encode("utf-8"))

    @staticmethod
    def _nearest_row(record: CacheRecord, client, now: float) -> dict:
        if client is not None and record.geo is not None:
            distance = round(haversine_km(client, record.geo), 3)
        else:
            distance = None
        return {
            "hostname": record.hostname,
            "public_ip": record.public_ip,
            "port": record.port,
            "distance_km": distance,
            "load": record.load,
            "last_active_s": round(now - record.last_heartbeat, 3),
        }

    def _handle_wpad(self, req: Request) -> Response:
        client_ip = self._client_ip(req)
        now = time.monotonic()
        try:
            records = self.finder.nearest(client_ip, 3, now)
        except ValueError:
            return text_response(400, f"malformed client address {client_ip!r}")
        with self._counters_lock:
            self._nearest_requests_total += 1
        parts = [f"PROXY {r.hostname}:{r.port}" for r in records]
        parts.append("DIRECT")
        body = PAC_TEMPLATE.format(chain="; ".join(parts))
        return Response(content_type="application/x-ns-proxy-autoconfig",
                        body=body.encode("utf-8"))

    def _handle_status_page(self) -> Response:
        now = time.monotonic()
        _, records = self.registry.snapshot()
        records.sort(key=lambda r: r.hostname)
        rows = []
        for r in records:
            if self._server_coord is not None and r.geo is not None:
                distance = f"{haversine_km(self._server_coord, r.geo):.0f}"
            else:
                distance = "n/a"
            rows.append(
                f"<tr><td>{html.escape(r.hostname)}</td><td>{html.escape(r.public_ip)}</td>"
                f"<td>{distance}</td><td>{r.load:.2f}</td><td>{now - r.last_heartbeat:.0f}</td></tr>")
        page = STATUS_PAGE.format(count=len(records), rows="\n".join(rows))
        return Response(content_type="text/html; charset=utf-8",
                        body=page.encode("utf-8"))

    def _handle_squids(self) -> Response:
        now = time.monotonic()
        _, records = self.registry.snapshot()
        rows = [{
            "id": r.id,
            "hostname": r.hostname,
            "public_ip": r.public_ip,
            "port": r.port,
            "lat": r.geo.lat if r.geo is not None else None,
            "lon": r.geo.lon if r.geo is not None else None,
            "load": r.load,
            "last_active_s": round(now - r.last_heartbeat, 3),
        } for r in records]
        return Response(content_type="application/json",
                        body=json.dumps(rows).encode("utf-8"))

    def _handle_stats(self) -> Response:
        broker_stats = self.broker.stats()
        with self._counters_lock:
            stats = {
                "heartbeats_total": self._heartbeats_total,
                "malformed_total": self._malformed_total,
                "discarded_total": broker_stats["discarded_total"],
                "nearest_requests_total": self._nearest_requests_total,
                "cache_hits": self.finder.hits,
                "cache_misses": self.finder.misses,
                "queue_dropped_total": broker_stats["queue_dropped_total"],
                "queue_depth": broker_stats["queue_depth"],
                "tracked": len(self.registry),
                "epoch": self.registry.epoch,
            }
        return Response(content_type="application/json",
                        body=json.dumps(stats).encode("utf-8"))

    def _handle_publish(self, req: Request) -> Response:
        parts = req.path.split("/")
        if len(parts) != 4 or not parts[2] or not parts[3]:
            return text_response(404, "expected /publish/{exchange}/{routing_key}")
        exchange = unquote(parts[2])
        routing_key = unquote(parts[3])
        try:
            self.broker.publish(exchange, routing_key, req.body)
        except UnknownExchangeError:
            return text_response(404, f"unknown exchange {exchange!r}")
        except ValueError as exc:
            return text_response(400, str(exc))
        return Response(status=204, body=b"")

    # ------------------------------------------------------------------
    # access log
    # ------------------------------------------------------------------
    @staticmethod
    def _open_access_log(setting: str) -> IO[str] | None:
        if setting in ("", "off", "none"):
            return None
        if setting == "-":
            return sys.stderr
        return open(setting, "a", buffering=1, encoding="utf-8")

    def _access_log(self, peer_ip: str, method: str, path: str,
                    status: int, latency_us: int) -> None:
        ts = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%f")[:-3] + "Z"
        line = f'{ts} {peer_ip} "{method} {path}" {status} {latency_us}us\n'
        with self._access_lock:
            try:
                self._access_sink.write(line)
            except ValueError:
                pass
