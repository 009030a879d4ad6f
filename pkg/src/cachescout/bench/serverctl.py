"""Spawn a discovery server subprocess with a throwaway config."""
from __future__ import annotations

import subprocess
import sys
import tempfile
import time
from pathlib import Path

from .synth import SynthAgent, write_locator_table

STARTUP_TIMEOUT_S = 20.0


class ServerProcess:
    """A discovery server child process bound to an ephemeral port.

    Writes a config file (and optionally a locator table for the given
    fleet) into a temp directory, starts ``cachescout server``, and waits
    for its "listening on host:port" line. Use as a context manager so the
    child is always reaped.
    """

    def __init__(self, *, fleet: list[SynthAgent] | None = None,
                 settings: dict[str, str] | None = None):
        self._dir = tempfile.TemporaryDirectory(prefix="cachescout-bench-")
        root = Path(self._dir.name)
        merged: dict[str, str] = {
            "server.host": "127.0.0.1",
            "server.port": "0",
            "server.trust_xff": "true",
            "server.access_log": "off",
        }
        if fleet is not None:
            table = root / "geo.csv"
            write_locator_table(table, fleet)
            merged["geo.table_path"] = str(table)
        if settings:
            merged.update(settings)
        config_path = root / "server.conf"
        config_path.write_text(
            "".join(f"{key} = {value}\n" for key, value in merged.items()),
            encoding="utf-8")
        self._proc = subprocess.Popen(
            [sys.executable, "-m", "cachescout.cli", "server",
             "--config", str(config_path)],
            stdout=subprocess.PIPE, stderr=subprocess.DEVNULL, text=True)
        self.host, self.port = self._wait_for_listen()

    def _wait_for_listen(self) -> tuple[str, int]:
        deadline = time.monotonic() + STARTUP_TIMEOUT_S
        assert self._proc.stdout is not None
        while time.monotonic() < deadline:
            line = self._proc.stdout.readline()
            if not line:
                break
            if line.startswith("listening on "):
                address = line.split("listening on ", 1)[1].strip()
                host, _, port = address.rpartition(":")
                return host, int(port)
        self.stop()
        raise RuntimeError("server process did not announce its port")

    @property
    def base_url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def stop(self) -> None:
        if self._proc.poll() is None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        if self._proc.stdout is not None:
            self._proc.stdout.close()
        self._dir.cleanup()

    def __enter__(self) -> ServerProcess:
        return self

    def __exit__(self, *exc) -> None:
        self.stop()
