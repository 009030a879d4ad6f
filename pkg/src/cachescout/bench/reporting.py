"""Benchmark run records: JSONL log, CSV export, and rendered figures.

Runs append one JSON object per line while they execute; `bench report`
turns the accumulated log into a CSV and PNG charts after the fact, so no
plotting cost lands inside a measurement window.
"""
from __future__ import annotations

import csv
import json
import time
from pathlib import Path


def append_record(path: str | Path, record: dict) -> None:
    row = dict(record)
    row.setdefault("ts", time.strftime("%Y-%m-%dT%H:%M:%S%z"))
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_records(path: str | Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
    return records


def write_csv(records: list[dict], path: str | Path) -> None:
    fields: list[str] = []
    for record in records:
        for key in record:
            if key not in fields:
                fields.append(key)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, restval="")
        writer.writeheader()
        writer.writerows(records)


def _sweep_series(records: list[dict]) -> dict[str, list[tuple[int, dict]]]:
    series: dict[str, list[tuple[int, dict]]] = {}
    for record in records:
        if record.get("kind") == "sweep" and "n" in record:
            series.setdefault(str(record.get("cache", "?")), []).append(
                (int(record["n"]), record))
    for points in series.values():
        points.sort(key=lambda pair: pair[0])
    return series


def render_figures(records: list[dict], out_dir: str | Path) -> list[Path]:
    """Write PNG charts for whatever record kinds are present."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    sweeps = _sweep_series(records)
    if sweeps:
        fig, (ax_lat, ax_rps) = plt.subplots(1, 2, figsize=(11, 4.5))
        for cache, points in sorted(sweeps.items()):
            ns = [n for n, _ in points]
            ax_lat.plot(ns, [r["mean_ms"] for _, r in points],
                        marker="o", label=f"cache {cache}")
            ax_rps.plot(ns, [r["rps"] for _, r in points],
                        marker="o", label=f"cache {cache}")
        ax_lat.set_xlabel("registered caches")
        ax_lat.set_ylabel("mean latency (ms)")
        ax_lat.set_title("nearest-query latency vs registry size")
        ax_lat.legend()
        ax_rps.set_xlabel("registered caches")
        ax_rps.set_ylabel("requests/s")
        ax_rps.set_title("throughput vs registry size")
        ax_rps.legend()
        fig.tight_layout()
        target = out / "sweep.png"
        fig.savefig(target, dpi=120)
        plt.close(fig)
        written.append(target)

    http_runs = [r for r in records if r.get("kind") == "http"]
    if http_runs:
        fig, ax = plt.subplots(figsize=(7, 4.5))
        xs = range(len(http_runs))
        ax.bar([x - 0.2 for x in xs], [r["rps"] for r in http_runs],
               width=0.4, label="requests/s")
        ax2 = ax.twinx()
        ax2.bar([x + 0.2 for x in xs], [r["p95_ms"] for r in http_runs],
                width=0.4, color="tab:orange", label="p95 (ms)")
        ax.set_xticks(list(xs))
        ax.set_xticklabels([f"c={r.get('concurrency', '?')}" for r in http_runs])
        ax.set_ylabel("requests/s")
        ax2.set_ylabel("p95 latency (ms)")
        ax.set_title("HTTP load runs")
        fig.tight_layout()
        target = out / "http.png"
        fig.savefig(target, dpi=120)
        plt.close(fig)
        written.append(target)

    ingest_runs = [r for r in records if r.get("kind") == "ingest"]
    if ingest_runs:
        fig, ax = plt.subplots(figsize=(7, 4.5))
        xs = range(len(ingest_runs))
        ax.bar([x - 0.2 for x in xs], [r["sent"] for r in ingest_runs],
               width=0.4, label="sent")
        ax.bar([x + 0.2 for x in xs], [r["applied"] for r in ingest_runs],
               width=0.4, label="applied")
        ax.set_xticks(list(xs))
        ax.set_xticklabels([f"{r.get('rate_per_min', '?')}/min" for r in ingest_runs])
        ax.set_ylabel("heartbeats")
        ax.set_title("ingest runs")
        ax.legend()
        fig.tight_layout()
        target = out / "ingest.png"
        fig.savefig(target, dpi=120)
        plt.close(fig)
        written.append(target)

    return written


def render_report(log_path: str | Path, out_dir: str | Path) -> dict:
    """CSV plus figures for a run log; returns what was written."""
    records = read_records(log_path)
    if not records:
        raise ValueError(f"{log_path}: no records")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "runs.csv"
    write_csv(records, csv_path)
    figures = render_figures(records, out)
    return {"records": len(records), "csv": csv_path, "figures": figures}
