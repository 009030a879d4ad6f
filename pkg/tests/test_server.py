from __future__ import annotations

import json
import time

from cachescout.wire import encode_heartbeat

from conftest import CLIENT_IP, get_json, http_get, http_post, make_heartbeat

NEAREST_KEYS = {"hostname", "public_ip", "port", "distance_km", "load", "last_active_s"}


def fill(harness, count: int = 6):
    subnets = ["10.1.1", "10.2.2", "10.3.3", "10.4.4"]
    for i in range(1, count + 1):
        harness.publish_heartbeat(
            make_heartbeat(i, subnet=subnets[i % len(subnets)], load=float(i)))
    harness.wait_tracked(count)


def test_heartbeats_flow_into_nearest(harness):
    fill(harness)
    rows = get_json(f"{harness.url}/nearest?count=3",
                    headers={"X-Forwarded-For": CLIENT_IP})
    assert len(rows) == 3
    assert set(rows[0]) == NEAREST_KEYS
    # client subnet is co-located with the 10.1.1.0/24 cache: distance 0 first
    assert rows[0]["hostname"] == "sq-004.example"
    assert rows[0]["distance_km"] == 0.0
    # both Toronto caches (~352 km, same bucket, load order) before London
    assert rows[1]["hostname"] == "sq-001.example"
    assert rows[2]["hostname"] == "sq-005.example"
    assert rows[1]["distance_km"] == 352.096


def test_nearest_defaults_to_five(harness):
    fill(harness, count=7)
    rows = get_json(f"{harness.url}/nearest",
                    headers={"X-Forwarded-For": CLIENT_IP})
    assert len(rows) == 5


def test_nearest_count_validation(harness):
    for bad in ("0", "101", "-3", "many", "2.5"):
        status, _, body = http_get(f"{harness.url}/nearest?count={bad}")
        assert status == 400, f"count={bad} -> {status} {body!r}"


def test_nearest_empty_registry_is_empty_list(harness):
    assert get_json(f"{harness.url}/nearest") == []


def test_nearest_without_xff_uses_peer_address(harness):
    fill(harness)
    rows = get_json(f"{harness.url}/nearest?count=6")
    # 127.0.0.1 resolves to nothing: ordering degrades to (load, id)
    assert [r["load"] for r in rows] == sorted(r["load"] for r in rows)
    assert all(r["distance_km"] is None for r in rows)


def test_xff_ignored_when_untrusted(make_server):
    harness = make_server(**{"server.trust_xff": "false"})
    fill(harness)
    rows = get_json(f"{harness.url}/nearest?count=6",
                    headers={"X-Forwarded-For": CLIENT_IP})
    assert all(r["distance_km"] is None for r in rows)


def test_xff_takes_first_address(harness):
    fill(harness)
    rows = get_json(f"{harness.url}/nearest?count=1",
                    headers={"X-Forwarded-For": f"{CLIENT_IP}, 10.9.9.9"})
    assert rows[0]["distance_km"] == 0.0


def test_nearest_rejects_malformed_forwarded_address(harness):
    fill(harness)
    status, _, _ = http_get(f"{harness.url}/nearest",
                            headers={"X-Forwarded-For": "not-an-ip"})
    assert status == 400


def test_wpad_matches_nearest(harness):
    fill(harness)
    rows = get_json(f"{harness.url}/nearest?count=3",
                    headers={"X-Forwarded-For": CLIENT_IP})
    status, ctype, body = http_get(f"{harness.url}/wpad.dat",
                                   headers={"X-Forwarded-For": CLIENT_IP})
    assert status == 200
    assert ctype == "application/x-ns-proxy-autoconfig"
    chain = "; ".join(f"PROXY {r['hostname']}:{r['port']}" for r in rows)
    expected = f'function FindProxyForURL(url, host) {{ return "{chain}; DIRECT"; }}'
    assert body.decode() == expected


def test_wpad_empty_registry_returns_direct_only(harness):
    _, _, body = http_get(f"{harness.url}/wpad.dat")
    assert body.decode() == 'function FindProxyForURL(url, host) { return "DIRECT"; }'


def test_status_page(harness):
    status, ctype, body = http_get(harness.url + "/")
    page = body.decode()
    assert status == 200 and ctype.startswith("text/html")
    assert '<meta http-equiv="refresh" content="30">' in page
    assert "0 tracked" in page
    fill(harness, count=2)
    page = http_get(harness.url + "/")[2].decode()
    assert "2 tracked" in page
    assert "sq-001.example" in page


def test_api_squids_lists_everything(harness):
    fill(harness, count=4)
    rows = get_json(f"{harness.url}/api/squids")
    assert len(rows) == 4
    for row in rows:
        assert set(row) == {"id", "hostname", "public_ip", "port", "lat", "lon",
                            "load", "last_active_s"}
    by_id = {r["id"]: r for r in rows}
    assert by_id["cache-004"]["lat"] == 45.4215  # 10.1.1.0/24
    assert by_id["cache-004"]["lon"] == -75.6972


def test_api_stats_counters_add_up(harness):
    fill(harness, count=3)
    get_json(f"{harness.url}/nearest", headers={"X-Forwarded-For": CLIENT_IP})
    get_json(f"{harness.url}/nearest", headers={"X-Forwarded-For": CLIENT_IP})
    http_get(f"{harness.url}/wpad.dat", headers={"X-Forwarded-For": CLIENT_IP})
    stats = harness.stats()
    assert stats["heartbeats_total"] == 3
    assert stats["malformed_total"] == 0
    assert stats["nearest_requests_total"] == 3
    assert stats["cache_hits"] + stats["cache_misses"] == stats["nearest_requests_total"]
    assert stats["tracked"] == 3
    for key in ("discarded_total", "queue_dropped_total", "queue_depth", "epoch"):
        assert key in stats


def test_malformed_heartbeat_is_counted_not_applied(harness):
    status, _ = http_post(
        f"{harness.url}/publish/{harness.server.exchange}/{harness.server.routing_key}",
        b'{"id": "x", "port": "oops"}')
    assert status == 204  # accepted for routing; rejected at validation
    deadline = time.monotonic() + 5
    while harness.stats()["malformed_total"] == 0 and time.monotonic() < deadline:
        time.sleep(0.01)
    stats = harness.stats()
    assert stats["malformed_total"] == 1
    assert stats["heartbeats_total"] == 0
    assert stats["tracked"] == 0


def test_publish_unknown_exchange_is_404(harness):
    status, body = http_post(f"{harness.url}/publish/ghost/beat", b"{}")
    assert status == 404
    assert b"ghost" in body


def test_publish_with_unbound_key_is_discarded(harness):
    status, _ = http_post(
        f"{harness.url}/publish/{harness.server.exchange}/other-key",
        encode_heartbeat(make_heartbeat()))
    assert status == 204
    assert harness.stats()["discarded_total"] == 1
    assert harness.stats()["heartbeats_total"] == 0


def test_publish_rejects_empty_body(harness):
    status, _ = http_post(
        f"{harness.url}/publish/{harness.server.exchange}/{harness.server.routing_key}",
        b"")
    assert status == 400


def test_publish_requires_post_and_nearest_requires_get(harness):
    status, _, _ = http_get(
        f"{harness.url}/publish/{harness.server.exchange}/{harness.server.routing_key}")
    assert status == 405
    status, _ = http_post(f"{harness.url}/nearest", b"{}")
    assert status == 405


def test_unknown_path_is_404(harness):
    assert http_get(f"{harness.url}/nope")[0] == 404
    assert http_get(f"{harness.url}/publish")[0] == 404


def test_refresh_heartbeat_updates_load_and_liveness(harness):
    harness.publish_heartbeat(make_heartbeat(1, subnet="10.1.1", load=1.0))
    harness.wait_tracked(1)
    harness.publish_heartbeat(make_heartbeat(1, subnet="10.1.1", load=8.0))
    deadline = time.monotonic() + 5
    while time.monotonic() < deadline:
        rows = get_json(f"{harness.url}/api/squids")
        if rows and rows[0]["load"] == 8.0:
            break
        time.sleep(0.01)
    rows = get_json(f"{harness.url}/api/squids")
    assert len(rows) == 1
    assert rows[0]["load"] == 8.0


def test_ttl_sweep_removes_silent_cache(make_server):
    harness = make_server(**{"registry.ttl_s": "1", "registry.sweep_period_s": "0.2"})
    harness.publish_heartbeat(make_heartbeat(1))
    harness.wait_tracked(1)
    deadline = time.monotonic() + 6
    while time.monotonic() < deadline:
        if harness.stats()["tracked"] == 0:
            break
        time.sleep(0.05)
    assert harness.stats()["tracked"] == 0
    assert get_json(f"{harness.url}/nearest") == []


def test_nearest_last_active_reflects_heartbeat_age(harness):
    harness.publish_heartbeat(make_heartbeat(1, subnet="10.1.1"))
    harness.wait_tracked(1)
    time.sleep(0.3)
    rows = get_json(f"{harness.url}/nearest", headers={"X-Forwarded-For": CLIENT_IP})
    assert 0.25 <= rows[0]["last_active_s"] < 5.0


def test_server_status_page_shows_distance_when_server_located(make_server):
    harness = make_server(**{"server.public_ip": CLIENT_IP})
    fill(harness, count=2)
    page = http_get(harness.url + "/")[2].decode()
    assert "<td>352</td>" in page  # Toronto cache, ~352 km from the server's subnet


def test_concurrent_readers_while_heartbeats_arrive(harness):
    import threading

    stop = threading.Event()
    failures: list[str] = []

    def reader():
        while not stop.is_set():
            status, _, _ = http_get(f"{harness.url}/nearest?count=5",
                                    headers={"X-Forwarded-For": CLIENT_IP})
            if status != 200:
                failures.append(f"nearest -> {status}")
                return

    threads = [threading.Thread(target=reader) for _ in range(4)]
    for t in threads:
        t.start()
    for i in range(1, 40):
        harness.publish_heartbeat(make_heartbeat(i % 8 + 1, load=float(i)))
    stop.set()
    for t in threads:
        t.join(timeout=10)
    assert not failures
