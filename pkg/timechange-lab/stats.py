"""
Statistics utilities shared by the checks.

Means are taken with numpy's pairwise summation over contiguous 1-D data, so
the result depends only on the gathered (index ordered) data, never on how
many workers produced it.

:copyright: (c) 2026 Time-change lab contributors
:license: Mozilla Public License Version 2.0, see LICENSE for more details.
"""

from dataclasses import dataclass

import numpy as np
from errors import InvalidArgumentError
from scipy.stats import ks_2samp


@dataclass(frozen=True)
class SummaryStats:
    """Sample mean with its standard error."""

    mean: float
    standard_error: float


def pairwise_sum(values) -> float:
    """Fixed-order pairwise sum of a 1-D sample."""
    return float(np.sum(np.ascontiguousarray(values, dtype=float).ravel()))


def summary_stats(samples) -> SummaryStats:
    """
    Mean and standard error (sample standard deviation / sqrt(n)).

    :param samples: at least two reals.
    :return: the summary.
    """
    x = np.ascontiguousarray(samples, dtype=float).ravel()
    n = x.size
    if n < 2:
        raise InvalidArgumentError(f"need at least 2 samples, got {n}")
    mean = pairwise_sum(x) / n
    var = pairwise_sum((x - mean) ** 2) / (n - 1)
    return SummaryStats(mean, float(np.sqrt(var / n)))


def column_stats(matrix) -> tuple[np.ndarray, np.ndarray]:
    """Per-column mean and standard error of an (n, m) array; SE is NaN when n < 2."""
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] == 0:
        raise InvalidArgumentError("need a nonempty (n, m) sample matrix")
    n = m.shape[0]
    columns = np.ascontiguousarray(m.T)
    means = np.sum(columns, axis=1) / n
    if n < 2:
        return means, np.full(means.shape, np.nan)
    var = np.sum((columns - means[:, None]) ** 2, axis=1) / (n - 1)
    return means, np.sqrt(var / n)


def ks_two_sample(a, b) -> float:
    """Sup over the merged sample of |F_a - F_b| for the empirical CDFs."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise InvalidArgumentError("both samples must be nonempty")
    return float(ks_2samp(a, b, method="asymp").statistic)
