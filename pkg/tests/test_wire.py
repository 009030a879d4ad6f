from __future__ import annotations

import json

import pytest

from cachescout.wire import (HEARTBEAT_MAX_BYTES, Heartbeat, WireError,
                             encode_heartbeat, parse_heartbeat)

from conftest import make_heartbeat


def test_roundtrip():
    hb = make_heartbeat(7, load=2.25, timestamp=1234.5)
    assert parse_heartbeat(encode_heartbeat(hb)) == hb


def test_extra_keys_are_ignored():
    body = json.loads(encode_heartbeat(make_heartbeat()))
    body["build"] = "v9"
    body["tags"] = ["a", "b"]
    hb = parse_heartbeat(json.dumps(body).encode())
    assert hb.id == "cache-001"


def test_encode_rejects_oversized_body():
    hb = make_heartbeat(hostname="x" * (HEARTBEAT_MAX_BYTES + 1))
    with pytest.raises(WireError, match="exceeds"):
        encode_heartbeat(hb)


def test_parse_rejects_oversized_body():
    padding = b" " * HEARTBEAT_MAX_BYTES
    with pytest.raises(WireError, match="exceeds"):
        parse_heartbeat(padding + b"{}")


@pytest.mark.parametrize("payload", [
    b"", b"not json", b"[1,2,3]", b'"heartbeat"', b"\xff\xfe\x00",
])
def test_parse_rejects_non_object_bodies(payload):
    with pytest.raises(WireError):
        parse_heartbeat(payload)


def _mutated(**changes) -> bytes:
    body = json.loads(encode_heartbeat(make_heartbeat()))
    for key, value in changes.items():
        if value is None:
            body.pop(key, None)
        else:
            body[key] = value
    return json.dumps(body).encode()


@pytest.mark.parametrize("changes", [
    {"id": None}, {"id": ""}, {"id": 7},
    {"hostname": None}, {"hostname": ""},
    {"public_ip": "256.1.1.1"}, {"public_ip": "10.0.0"}, {"public_ip": "01.2.3.4"},
    {"public_ip": 167772161},
    {"port": 0}, {"port": 65536}, {"port": "3128"}, {"port": True}, {"port": None},
    {"load": -0.5}, {"load": "high"}, {"load": None},
    {"load": float("nan")}, {"load": float("inf")},
    {"timestamp": -1}, {"timestamp": None},
    {"interval_s": 0}, {"interval_s": 2.5}, {"interval_s": None},
])
def test_parse_rejects_bad_fields(changes):
    with pytest.raises(WireError):
        parse_heartbeat(_mutated(**changes))


def test_numbers_may_arrive_as_ints():
    hb = parse_heartbeat(_mutated(load=3, timestamp=100))
    assert hb.load == 3.0 and isinstance(hb.load, float)
    assert hb.timestamp == 100.0
