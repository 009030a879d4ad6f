"""Key=value configuration with environment-variable overrides.

Config files are UTF-8 text, one ``section.key=value`` per line, ``#``
comments allowed. Every key can be overridden by an environment variable
named ``CACHESCOUT_<KEY>`` with dots replaced by underscores, e.g.
``server.port`` -> ``CACHESCOUT_SERVER_PORT``.
"""
from __future__ import annotations

import os

DEFAULTS: dict[str, str] = {
    # REST listener
    "server.host": "0.0.0.0",
    "server.port": "8080",
    "server.trust_xff": "false",
    "server.public_ip": "",
    "server.access_log": "-",
    # registry liveness
    "registry.ttl_s": "90",
    "registry.sweep_period_s": "15",
    # broker routing
    "broker.exchange": "squids",
    "broker.queue": "squids.heartbeats",
    "broker.routing_key": "squiddata",
    "broker.queue_capacity": "20000",
    # geo resolution and subnet cache
    "geo.table_path": "",
    "geo.cache_ttl_s": "60",
    # heartbeat agent
    "agent.server_url": "http://localhost:8080",
    "agent.interval_s": "30",
    "agent.port": "3128",
    "agent.load_source": "static:0",
    "agent.state_path": "",
    "agent.hostname": "",
    "agent.public_ip": "",
}

ENV_PREFIX = "CACHESCOUT_"

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class ConfigError(ValueError):
    """Raised for unparseable config files or malformed values."""


class Config:
    """Immutable view over defaults + file values + env overrides."""

    def __init__(self, values: dict[str, str] | None = None):
        self._values = dict(DEFAULTS)
        if values:
            self._values.update(values)
        for key in self._values:
            env_name = ENV_PREFIX + key.replace(".", "_").upper()
            env_val = os.environ.get(env_name)
            if env_val is not None:
                self._values[key] = env_val

    @classmethod
    def load(cls, path: str | None = None) -> "Config":
        values: dict[str, str] = {}
        if path:
            with open(path, encoding="utf-8") as fh:
                for lineno, raw in enumerate(fh, 1):
                    line = raw.strip()
                    if not line or line.startswith("#"):
                        continue
                    if "=" not in line:
                        raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
                    key, _, value = line.partition("=")
                    values[key.strip()] = value.strip()
        return cls(values)

    def get(self, key: str, default: str | None = None) -> str:
        if key in self._values:
            return self._values[key]
        if default is not None:
            return default
        raise ConfigError(f"unknown config key: {key}")

    def get_int(self, key: str) -> int:
        raw = self.get(key)
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected integer, got {raw!r}") from None

    def get_float(self, key: str) -> float:
        raw = self.get(key)
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected number, got {raw!r}") from None

    def get_bool(self, key: str) -> bool:
        raw = self.get(key).lower()
        if raw in _TRUE:
            return True
        if raw in _FALSE:
            return False
        raise ConfigError(f"{key}: expected boolean, got {raw!r}")

    def as_dict(self) -> dict[str, str]:
        return dict(self._values)
