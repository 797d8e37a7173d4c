"""Standard-error helpers shared by the Monte Carlo estimators."""

from __future__ import annotations

import math

import numpy as np

DEFAULT_BATCHES = 30


def batch_mean_se(values, batches: int = DEFAULT_BATCHES) -> tuple[float, float]:
    """Mean of ``values`` and its batch-means standard error.

    Falls back to the i.i.d. formula when there are fewer values than batches.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("no values")
    mean = float(v.mean())
    if v.size < 2:
        return mean, math.nan
    if v.size < 2 * batches:
        return mean, float(v.std(ddof=1) / math.sqrt(v.size))
    means = np.array([b.mean() for b in np.array_split(v, batches)])
    return mean, float(means.std(ddof=1) / math.sqrt(batches))


def combined_se(*ses: float) -> float:
    return math.sqrt(sum(float(s) ** 2 for s in ses))


def jackknife_se(groups: np.ndarray, statistic) -> float:
    """Delete-a-group jackknife SE of ``statistic`` applied along axis 0."""
    g = groups.shape[0]
    if g < 2:
        return math.nan
    idx = np.arange(g)
    reps = np.array([statistic(groups[idx != i]) for i in range(g)])
    return float(math.sqrt((g - 1) / g * np.sum((reps - reps.mean()) ** 2)))
