"""Shared fixtures: in-process servers, canned heartbeats, HTTP helpers."""
from __future__ import annotations

import json
import time
import urllib.error
import urllib.request

import pytest

from cachescout.config import Config
from cachescout.geo import GeoCoord, IpLocator
from cachescout.server import DiscoveryServer
from cachescout.wire import Heartbeat, encode_heartbeat

# four /24s with known coordinates, plus the one the test client sits in
TEST_SUBNETS = [
    ("10.1.1.0/24", 45.4215, -75.6972),   # Ottawa
    ("10.2.2.0/24", 43.6532, -79.3832),   # Toronto
    ("10.3.3.0/24", 51.5074, -0.1278),    # London
    ("10.4.4.0/24", -33.8688, 151.2093),  # Sydney
    ("192.0.2.0/24", 45.4215, -75.6972),  # client subnet, co-located with Ottawa
]
CLIENT_IP = "192.0.2.10"


def make_locator() -> IpLocator:
    return IpLocator([(cidr, GeoCoord(lat, lon)) for cidr, lat, lon in TEST_SUBNETS])


def make_heartbeat(i: int = 1, *, subnet: str = "10.1.1", load: float = 1.0,
                   **overrides) -> Heartbeat:
    fields = {
        "id": f"cache-{i:03d}",
        "hostname": f"sq-{i:03d}.example",
        "public_ip": f"{subnet}.{i}",
        "port": 3128,
        "load": load,
        "timestamp": time.time(),
        "interval_s": 30,
    }
    fields.update(overrides)
    return Heartbeat(**fields)


@pytest.fixture
def locator() -> IpLocator:
    return make_locator()


def http_get(url: str, headers: dict[str, str] | None = None,
             timeout: float = 5.0) -> tuple[int, str, bytes]:
    """GET returning (status, content_type, body) without raising on 4xx/5xx."""
    request = urllib.request.Request(url, headers=headers or {})
    try:
        with urllib.request.urlopen(request, timeout=timeout) as response:
            return response.status, response.headers.get("Content-Type", ""), response.read()
    except urllib.error.HTTPError as err:
        return err.code, err.headers.get("Content-Type", ""), err.read()


def http_post(url: str, body: bytes, timeout: float = 5.0) -> tuple[int, bytes]:
    request = urllib.request.Request(url, data=body, method="POST")
    try:
        with urllib.request.urlopen(request, timeout=timeout) as response:
            return response.status, response.read()
    except urllib.error.HTTPError as err:
        return err.code, err.read()


def get_json(url: str, headers: dict[str, str] | None = None):
    status, _, body = http_get(url, headers)
    assert status == 200, f"GET {url} -> {status}: {body!r}"
    return json.loads(body)


class ServerHarness:
    """In-process DiscoveryServer plus helpers bound to its URL."""

    def __init__(self, server: DiscoveryServer):
        self.server = server
        self.url = server.url

    def publish_heartbeat(self, hb: Heartbeat) -> int:
        exchange = self.server.exchange
        key = self.server.routing_key
        status, body = http_post(f"{self.url}/publish/{exchange}/{key}",
                                 encode_heartbeat(hb))
        assert status == 204, f"publish -> {status}: {body!r}"
        return status

    def wait_tracked(self, n: int, timeout: float = 5.0) -> None:
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            stats = get_json(f"{self.url}/api/stats")
            if stats["tracked"] >= n and stats["queue_depth"] == 0:
                return
            time.sleep(0.01)
        raise TimeoutError(f"server never reached {n} tracked records")

    def stats(self) -> dict:
        return get_json(f"{self.url}/api/stats")


@pytest.fixture
def make_server(tmp_path):
    """Factory for in-process servers; every server is stopped on teardown."""
    started: list[DiscoveryServer] = []

    def _make(with_geo: bool = True, **settings: str) -> ServerHarness:
        values = {
            "server.host": "127.0.0.1",
            "server.port": "0",
            "server.trust_xff": "true",
            "server.access_log": "off",
        }
        if with_geo:
            table = tmp_path / "locator.csv"
            table.write_text("".join(f"{cidr},{lat},{lon}\n"
                                     for cidr, lat, lon in TEST_SUBNETS))
            values["geo.table_path"] = str(table)
        values.update(settings)
        server = DiscoveryServer(Config(values))
        server.start()
        started.append(server)
        return ServerHarness(server)

    yield _make
    for server in started:
        server.stop()


@pytest.fixture
def harness(make_server) -> ServerHarness:
    return make_server()
