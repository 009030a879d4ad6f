"""Heartbeat wire schema shared by the agent, server, and bench harness.

The body is one UTF-8 JSON object, at most 4 KiB, with exactly these
required fields (extra keys are ignored for forward compatibility):

    id          non-empty string, the agent's persistent identity token
    hostname    non-empty DNS name string
    public_ip   dotted-quad IPv4 string
    port        integer, 1..65535
    load        non-negative finite number
    timestamp   sender wall-clock seconds since epoch, non-negative
    interval_s  sender's configured interval, integer >= 1
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .geo import parse_ipv4

HEARTBEAT_MAX_BYTES = 4096


class WireError(ValueError):
    """Raised for heartbeat payloads that fail schema validation."""


@dataclass(frozen=True)
class Heartbeat:
    id: str
    hostname: str
    public_ip: str
    port: int
    load: float
    timestamp: float
    interval_s: int


def encode_heartbeat(hb: Heartbeat) -> bytes:
    body = json.dumps({
        "id": hb.id,
        "hostname": hb.hostname,
        "public_ip": hb.public_ip,
        "port": hb.port,
        "load": hb.load,
        "timestamp": hb.timestamp,
        "interval_s": hb.interval_s,
    }, separators=(",", ":")).encode("utf-8")
    if len(body) > HEARTBEAT_MAX_BYTES:
        raise WireError(f"heartbeat body exceeds {HEARTBEAT_MAX_BYTES} bytes")
    return body


def parse_heartbeat(payload: bytes) -> Heartbeat:
    """Validate and decode one heartbeat body; raises WireError on any defect."""
    if len(payload) > HEARTBEAT_MAX_BYTES:
        raise WireError(f"body exceeds {HEARTBEAT_MAX_BYTES} bytes")
    try:
        obj = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WireError(f"body is not UTF-8 JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise WireError("body must be a JSON object")

    hb_id = _require_str(obj, "id")
    hostname = _require_str(obj, "hostname")
    public_ip = _require_str(obj, "public_ip")
    try:
        parse_ipv4(public_ip)
    except ValueError as exc:
        raise WireError(str(exc)) from None

    port = _require_int(obj, "port")
    if not (1 <= port <= 65535):
        raise WireError(f"port out of range: {port}")

    load = _require_number(obj, "load")
    if load < 0:
        raise WireError(f"load must be non-negative: {load}")

    timestamp = _require_number(obj, "timestamp")
    if timestamp < 0:
        raise WireError(f"timestamp must be non-negative: {timestamp}")

    interval_s = _require_int(obj, "interval_s")
    if interval_s < 1:
        raise WireError(f"interval_s must be >= 1: {interval_s}")

    return Heartbeat(hb_id, hostname, public_ip, port, float(load),
                     float(timestamp), interval_s)


def _require_str(obj: dict, key: str) -> str:
    value = obj.get(key)
    if not isinstance(value, str) or not value:
        raise WireError(f"{key} must be a non-empty string")
    return value


def _require_int(obj: dict, key: str) -> int:
    value = obj.get(key)
    if isinstance(value, bool) or not isinstance(value, int):
        raise WireError(f"{key} must be an integer")
    return value


def _require_number(obj: dict, key: str) -> float:
    value = obj.get(key)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise WireError(f"{key} must be a number")
    if not math.isfinite(value):
        raise WireError(f"{key} must be finite")
    return float(value)
