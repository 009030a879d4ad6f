"""Statistics helpers for benchmark reports."""
from __future__ import annotations

import statistics


def percentile(values: list[float], q: float) -> float:
    """Nearest-rank percentile; q in (0, 100]."""
    if not values:
        raise ValueError("percentile of empty list")
    if not (0 < q <= 100):
        raise ValueError(f"q out of range: {q}")
    ordered = sorted(values)
    rank = max(1, -(-len(ordered) * q // 100))  # ceil without float error
    return ordered[int(rank) - 1]


def fit_slope(points: list[tuple[float, float]]) -> dict[str, float]:
    """Least-squares line over (n, mean_ms) points.

    Returns the slope normalized per 1000 caches and the r-squared of the
    fit (1.0 for a constant series, where the zero-slope line is exact).
    """
    if len(points) < 3:
        raise ValueError("fit_slope needs at least 3 points")
    xs = [float(x) for x, _ in points]
    ys = [float(y) for _, y in points]
    try:
        slope, intercept = statistics.linear_regression(xs, ys)
    except statistics.StatisticsError:
        raise ValueError("degenerate fit: x values have no variance") from None
    ss_tot = sum((y - statistics.fmean(ys)) ** 2 for y in ys)
    if ss_tot == 0.0:
        r2 = 1.0
    else:
        ss_res = sum((y - (slope * x + intercept)) ** 2 for x, y in zip(xs, ys))
        r2 = 1.0 - ss_res / ss_tot
    return {"slope_ms_per_1000": slope * 1000.0, "r2": r2}
