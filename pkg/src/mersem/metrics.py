"""
Pareto hypervolume for two minimized objectives, Student-t confidence
intervals, and aggregation of per-run results into report rows.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

DEFAULT_REF = (1.01, 1.01)


class PointBeyondReference(ValueError):
    pass


class TooFewSamples(ValueError):
    pass


class MixedScenario(ValueError):
    pass


def pareto_filter(points: Iterable[Sequence[float]]) -> list[tuple[float, float]]:
    """Non-dominated subset (duplicates collapsed), sorted by the first objective."""
    pts = sorted(set((float(p[0]), float(p[1])) for p in points))
    front: list[tuple[float, float]] = []
    best_y = math.inf
    for x, y in pts:
        if y < best_y:
            front.append((x, y))
            best_y = y
    return front


def hypervolume(points: Iterable[Sequence[float]], ref: Sequence[float] = DEFAULT_REF,
                clip: bool = True) -> float:
    """Area dominated by ``points`` and bounded by ``ref`` (both objectives minimized).

    Points not strictly inside the reference box are dropped when ``clip`` is
    true and rejected otherwise.
    """
    rx, ry = float(ref[0]), float(ref[1])
    pts = [(float(p[0]), float(p[1])) for p in points]
    outside = [p for p in pts if not (p[0] <= rx and p[1] <= ry)]
    if outside and not clip:
        raise PointBeyondReference(f"{outside[0]} lies beyond reference point {ref}")
    front = pareto_filter(p for p in pts if p[0] <= rx and p[1] <= ry)
    area = 0.0
    # sweep left to right; each point owns the strip up to the next point's x
    for k, (x, y) in enumerate(front):
        x_next = front[k + 1][0] if k + 1 < len(front) else rx
        area += (x_next - x) * (ry - y)
    return area


def normalize_points(points: Iterable[Sequence[float]], lo: Sequence[float], hi: Sequence[float]) -> list[tuple[float, float]]:
    out = []
    for p in points:
        out.append(tuple(
            0.0 if hi[i] == lo[i] else (float(p[i]) - lo[i]) / (hi[i] - lo[i]) for i in range(2)
        ))
    return out


def confidence_interval(samples: Sequence[float], level: float = 0.95) -> tuple[float, float]:
    """Mean and Student-t half-width."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise TooFewSamples(f"need at least 2 samples, got {x.size}")
    mean = float(x.mean())
    sd = float(x.std(ddof=1))
    if sd == 0.0:
        return mean, 0.0
    t = float(stats.t.ppf(0.5 + level / 2, x.size - 1))
    return mean, t * sd / math.sqrt(x.size)


@dataclass
class RunResult:
    """Per-seed, per-variant result averaged over a run's epochs."""

    scenario: str
    variant: str
    seed: int
    sla_rate: float
    co2_g: float
    co2_by_layer: dict[str, float] = field(default_factory=dict)
    phv: float = math.nan


SUMMARY_COLUMNS = [
    "scenario", "variant", "n_runs",
    "sla_rate_mean", "sla_rate_ci",
    "co2_g_mean", "co2_g_ci",
    "co2_edge_g_mean", "co2_edge_g_ci",
    "co2_fog_g_mean", "co2_fog_g_ci",
    "co2_cloud_g_mean", "co2_cloud_g_ci",
    "phv_mean", "phv_ci",
    "ci_defined",
]


def _mean_ci(values: list[float]) -> tuple[float, float]:
    vals = [v for v in values if not math.isnan(v)]
    if not vals:
        return math.nan, math.nan
    if len(vals) < 2:
        return vals[0], 0.0
    return confidence_interval(vals)


def aggregate_runs(results: Sequence[RunResult]) -> list[dict]:
    """One row per variant with means and 95% CI half-widths.

    Rows with a single run report a half-width of 0 and ``ci_defined = 0``.
    """
    scenarios = {r.scenario for r in results}
    if len(scenarios) > 1:
        raise MixedScenario(f"results span scenarios {sorted(scenarios)}")
    groups: dict[str, list[RunResult]] = defaultdict(list)
    for r in results:
        groups[r.variant].append(r)
    rows = []
    for variant in sorted(groups):
        rs = groups[variant]
        row = {"scenario": rs[0].scenario, "variant": variant, "n_runs": len(rs)}
        for name, values in [
            ("sla_rate", [r.sla_rate for r in rs]),
            ("co2_g", [r.co2_g for r in rs]),
            ("co2_edge_g", [r.co2_by_layer.get("edge", 0.0) for r in rs]),
            ("co2_fog_g", [r.co2_by_layer.get("fog", 0.0) for r in rs]),
            ("co2_cloud_g", [r.co2_by_layer.get("cloud", 0.0) for r in rs]),
            ("phv", [r.phv for r in rs]),
        ]:
            row[f"{name}_mean"], row[f"{name}_ci"] = _mean_ci(values)
        row["ci_defined"] = int(len(rs) >= 2)
        rows.append(row)
    return rows
