"""Correlation measures and Williams' test for dependent correlations."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import betainc
from scipy.stats import rankdata


class DegenerateVarianceError(ValueError):
    pass


def _pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"need equal-length 1-D inputs, got {x.shape} and {y.shape}")
    if x.size < 3:
        raise ValueError("need at least 3 samples")
    return x, y


def pearson(x, y) -> float:
    x, y = _pair(x, y)
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateVarianceError("zero variance")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def rank(x) -> np.ndarray:
    """Average ranks, 1-based; ties share their mean rank."""
    return rankdata(np.asarray(x, dtype=np.float64), method="average")


def spearman(x, y) -> float:
    x, y = _pair(x, y)
    return pearson(rank(x), rank(y))


def student_t_sf2(t: float, df: float) -> float:
    """Two-tailed p-value ``P(|T| >= |t|)`` via the regularized incomplete beta."""
    return float(betainc(df / 2.0, 0.5, df / (df + t * t)))


def williams_test(r12: float, r13: float, r23: float, n: int) -> tuple[float, float]:
    """Williams' t for ``r12`` vs ``r13``, both sharing variable 1.

    ``r23`` is the correlation between the two non-shared variables.
    Returns ``(t, p)`` with a two-tailed p on ``n - 3`` degrees of freedom.
    """
    for r in (r12, r13, r23):
        if not -1.0 < r < 1.0:
            raise ValueError(f"correlation {r} outside (-1, 1)")
    if n < 4:
        raise ValueError("williams_test needs n >= 4")
    k = 1.0 - r12 * r12 - r13 * r13 - r23 * r23 + 2.0 * r12 * r13 * r23
    rbar = (r12 + r13) / 2.0
    denom = 2.0 * k * (n - 1) / (n - 3) + rbar * rbar * (1.0 - r23) ** 3
    t = (r12 - r13) * math.sqrt((n - 1) * (1.0 + r23) / denom)
    return t, student_t_sf2(t, n - 3)
