"""Sample reductions used by the experiment summaries."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class RegressionFit:
    slope: float
    intercept: float
    residual_mad: float

    def predict(self, x):
        return self.slope * np.asarray(x, dtype=float) + self.intercept


def _nonempty(sample: Sequence[float]) -> np.ndarray:
    arr = np.asarray(sample, dtype=float)
    if arr.size == 0:
        raise ValueError("sample is empty")
    return arr


def ecdf(sample: Sequence[float]) -> list[tuple[float, float]]:
    """Empirical CDF as (value, fraction <= value) at each distinct value."""
    arr = np.sort(_nonempty(sample))
    values, counts = np.unique(arr, return_counts=True)
    frac = np.cumsum(counts) / arr.size
    return [(float(v), float(f)) for v, f in zip(values, frac)]


def ecdf_at(steps: list[tuple[float, float]], x: float) -> float:
    out = 0.0
    for v, f in steps:
        if v > x:
            break
        out = f
    return out


def quantiles(sample: Sequence[float]) -> tuple[float, float, float]:
    """(q25, median, q75) with linear interpolation between order statistics."""
    q = np.quantile(_nonempty(sample), [0.25, 0.5, 0.75], method="linear")
    return float(q[0]), float(q[1]), float(q[2])


def median(sample: Sequence[float]) -> float:
    return float(np.median(_nonempty(sample)))


def ols_fit(points: Sequence[tuple[float, float]]) -> RegressionFit:
    """Least-squares line through ``points``; MAD is the median |residual|."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("need at least two points")
    x, y = pts[:, 0], pts[:, 1]
    dx = x - x.mean()
    sxx = float(dx @ dx)
    if sxx == 0.0:
        raise ValueError("x values are all equal; slope is undefined")
    slope = float(dx @ (y - y.mean())) / sxx
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (slope * x + intercept)
    return RegressionFit(slope, intercept, float(np.median(np.abs(resid))))
