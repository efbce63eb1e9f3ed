"""Objective vectors, weight vectors, min-max normalization and Pareto dominance."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple


class ObjectiveVector(NamedTuple):
    sla_rate: float
    co2_g: float


@dataclass(frozen=True)
class WeightVector:
    w_s: float
    w_c: float

    def __post_init__(self):
        if not (0.0 <= self.w_s <= 1.0 and 0.0 <= self.w_c <= 1.0):
            raise ValueError(f"weights must lie in [0, 1], got ({self.w_s}, {self.w_c})")
        if abs(self.w_s + self.w_c - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {self.w_s + self.w_c}")


@dataclass(frozen=True)
class NormBounds:
    sla: tuple[float, float]
    co2: tuple[float, float]

    def __post_init__(self):
        for lo, hi in (self.sla, self.co2):
            if not lo <= hi:
                raise ValueError(f"bounds need min <= max, got ({lo}, {hi})")

    @classmethod
    def from_points(cls, points: Iterable[ObjectiveVector]) -> "NormBounds":
        pts = list(points)
        if not pts:
            raise ValueError("need at least one point")
        s = [p[0] for p in pts]
        c = [p[1] for p in pts]
        return cls((min(s), max(s)), (min(c), max(c)))

    def normalize(self, obj: ObjectiveVector) -> tuple[float, float]:
        return _norm(obj[0], self.sla), _norm(obj[1], self.co2)


def _norm(x: float, bounds: tuple[float, float]) -> float:
    lo, hi = bounds
    return 0.0 if hi == lo else (x - lo) / (hi - lo)


def scalarize(obj: ObjectiveVector, w: WeightVector, bounds: NormBounds) -> float:
    """Weighted sum of min-max normalized objectives; lower is better."""
    ns, nc = bounds.normalize(obj)
    return w.w_s * ns + w.w_c * nc


def dominates(a, b) -> bool:
    """True iff ``a`` is no worse than ``b`` everywhere and strictly better somewhere (minimization)."""
    return all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b))


def is_finite(obj: ObjectiveVector) -> bool:
    return all(math.isfinite(x) for x in obj)
