"""Load-generation and measurement harness for the discovery server."""

from .analysis import fit_slope, percentile
from .load import (IngestReport, LoadReport, populate, run_http_load,
                   run_ingest_load)
from .serverctl import ServerProcess
from .synth import BENCH_CLIENT_IP, build_fleet, write_locator_table

__all__ = [
    "BENCH_CLIENT_IP",
    "IngestReport",
    "LoadReport",
    "ServerProcess",
    "build_fleet",
    "fit_slope",
    "percentile",
    "populate",
    "run_http_load",
    "run_ingest_load",
    "write_locator_table",
]
