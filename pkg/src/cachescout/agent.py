"""Heartbeat daemon run beside a cache server.

Publishes one heartbeat per tick to the discovery server's ingestion
endpoint, with up to 10% uniform jitter on the interval so large fleets do
not align into bursts. The agent's identity token persists in a state file
across restarts, so a restarted agent updates its record instead of
creating a duplicate. Publish failures are logged and retried on the next
tick; nothing is buffered.
"""
from __future__ import annotations

import http.client
import logging
import os
import random
import shlex
import socket
import subprocess
import threading
import time
import uuid
from urllib.parse import urlsplit

from .config import Config
from .wire import Heartbeat, encode_heartbeat

log = logging.getLogger(__name__)

DEFAULT_STATE_PATH = "~/.cachescout-agent-id"
COMMAND_TIMEOUT_S = 5.0
PUBLISH_TIMEOUT_S = 5.0


class LoadSource:
    """Load metric source: ``static:<value>``, ``file:<path>``, or ``command:<argv>``.

    The metric is an opaque non-negative number; on source failure the last
    known value is reused (0 before any success) and a failure is counted.
    """

    def __init__(self, source: str):
        kind, sep, arg = source.partition(":")
        if not sep or kind not in ("static", "file", "command"):
            raise ValueError(f"bad load source {source!r}; "
                             "expected static:<value>, file:<path>, or command:<argv>")
        self.kind = kind
        self.arg = arg
        self.last_value = 0.0
        self.failures = 0
        if kind == "static":
            self.last_value = self._check(float(arg))
        elif kind == "command":
            self._argv = shlex.split(arg)
            if not self._argv:
                raise ValueError("command load source needs a command line")

    @staticmethod
    def _check(value: float) -> float:
        if value < 0:
            raise ValueError(f"load must be non-negative: {value}")
        return value

    def collect(self) -> float:
        try:
            if self.kind == "static":
                value = float(self.arg)
            elif self.kind == "file":
                with open(self.arg, encoding="utf-8") as fh:
                    value = float(fh.read().strip())
            else:
                proc = subprocess.run(self._argv, capture_output=True, text=True,
                                      timeout=COMMAND_TIMEOUT_S, check=True)
                value = float(proc.stdout.split()[0])
            self.last_value = self._check(value)
        except (OSError, ValueError, IndexError, subprocess.SubprocessError) as exc:
            self.failures += 1
            log.warning("load source failed (%s); reusing %.3f", exc, self.last_value)
        return self.last_value


def load_or_create_identity(state_path: str) -> str:
    """Read the persistent agent id from the state file, creating it if needed."""
    path = os.path.expanduser(state_path)
    try:
        with open(path, encoding="utf-8") as fh:
            token = fh.read().strip()
        if token:
            return token
    except OSError:
        pass
    token = uuid.uuid4().hex
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(token + "\n")
    return token


class HeartbeatAgent:
    """Publishes heartbeats to ``/publish/{exchange}/{routing_key}`` on an interval."""

    def __init__(self, config: Config | None = None, rng: random.Random | None = None):
        self.config = config or Config()
        self._rng = rng or random.Random()
        url = urlsplit(self.config.get("agent.server_url"))
        if url.scheme not in ("http", "https") or not url.hostname:
            raise ValueError(f"bad agent.server_url: {self.config.get('agent.server_url')!r}")
        self._scheme = url.scheme
        self._host = url.hostname
        self._port = url.port or (443 if url.scheme == "https" else 80)
        self.interval_s = self.config.get_int("agent.interval_s")
        if self.interval_s < 1:
            raise ValueError("agent.interval_s must be >= 1")
        self.cache_port = self.config.get_int("agent.port")
        self.load_source = LoadSource(self.config.get("agent.load_source"))
        state_path = self.config.get("agent.state_path") or DEFAULT_STATE_PATH
        self.identity = load_or_create_identity(state_path)
        self.hostname = self.config.get("agent.hostname") or socket.getfqdn()
        self._public_ip_override = self.config.get("agent.public_ip")
        self._detected_ip: str | None = None
        exchange = self.config.get("broker.exchange")
        routing_key = self.config.get("broker.routing_key")
        self._publish_path = f"/publish/{exchange}/{routing_key}"
        self._last_timestamp = 0.0
        self.sent = 0
        self.publish_failures = 0

    def _public_ip(self) -> str:
        if self._public_ip_override:
            return self._public_ip_override
        return self._detected_ip or "0.0.0.0"

    def build_heartbeat(self, now: float | None = None) -> Heartbeat:
        if now is None:
            now = time.time()
        # strictly increasing even if the wall clock stalls or steps back
        timestamp = max(now, self._last_timestamp + 1e-3)
        self._last_timestamp = timestamp
        return Heartbeat(
            id=self.identity,
            hostname=self.hostname,
            public_ip=self._public_ip(),
            port=self.cache_port,
            load=self.load_source.collect(),
            timestamp=timestamp,
            interval_s=self.interval_s,
        )

    def send_once(self) -> bool:
        """Publish one heartbeat; returns False (and counts) on failure."""
        conn_cls = http.client.HTTPSConnection if self._scheme == "https" \
            else http.client.HTTPConnection
        conn = conn_cls(self._host, self._port, timeout=PUBLISH_TIMEOUT_S)
        try:
            conn.connect()
            if self._detected_ip is None and not self._public_ip_override:
                self._detected_ip = conn.sock.getsockname()[0]
            body = encode_heartbeat(self.build_heartbeat())
            conn.request("POST", self._publish_path, body=body,
                         headers={"Content-Type": "application/json"})
            response = conn.getresponse()
            response.read()
            if response.status != 204:
                self.publish_failures += 1
                log.warning("publish rejected: HTTP %d", response.status)
                return False
            self.sent += 1
            return True
        except OSError as exc:
            self.publish_failures += 1
            log.warning("publish failed (%s); will retry next tick", exc)
            return False
        finally:
            conn.close()

    def next_delay(self) -> float:
        """Interval with uniform jitter in [-10%, +10%]."""
        return self.interval_s * self._rng.uniform(0.9, 1.1)

    def run(self, stop: threading.Event | None = None,
            max_ticks: int | None = None) -> None:
        """Tick loop: one heartbeat per tick, scheduled from the current time."""
        stop = stop or threading.Event()
        ticks = 0
        while not stop.is_set():
            self.send_once()
            ticks += 1
            if max_ticks is not None and ticks >= max_ticks:
                return
            if stop.wait(self.next_delay()):
                return
