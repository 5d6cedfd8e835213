"""Forecast error metrics, Win/Tie/Loss tallies and rank-based tests."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import chi2, norm, rankdata

from .errors import AllZeroDifferences, DegenerateRanks, MapeUndefined

EXACT_MAX_N = 25


@dataclass(frozen=True)
class MetricTriple:
    rmse: float
    mae: float
    mape: float

    def to_dict(self) -> dict:
        return asdict(self)

    def get(self, name: str) -> float:
        return getattr(self, name)


METRICS = ("rmse", "mae", "mape")


def metrics(actual, predicted) -> MetricTriple:
    y = np.asarray(actual, dtype=np.float64)
    yhat = np.asarray(predicted, dtype=np.float64)
    if y.shape != yhat.shape or y.ndim != 1 or len(y) == 0:
        raise ValueError("actual and predicted must be non-empty 1-d arrays of equal length")
    zeros = np.flatnonzero(y == 0)
    if zeros.size:
        raise MapeUndefined(zeros.tolist())
    err = yhat - y
    return MetricTriple(
        rmse=float(np.sqrt(np.mean(err ** 2))),
        mae=float(np.mean(np.abs(err))),
        mape=float(100.0 * np.mean(np.abs(err / y))),
    )


@dataclass(frozen=True)
class WtlTally:
    wins: int
    ties: int
    losses: int

    def to_dict(self) -> dict:
        return asdict(self)


def compare(a: float, b: float, threshold: float = 0.05) -> int:
    """+1 if error ``a`` beats ``b`` by at least ``threshold`` relative, -1 if it loses, else 0."""
    if a == b:
        return 0
    if b > 0 and (b - a) / b >= threshold:
        return 1
    if a > 0 and (a - b) / a >= threshold:
        return -1
    return 0


def wtl(errors_a, errors_b, threshold: float = 0.05) -> WtlTally:
    if len(errors_a) != len(errors_b):
        raise ValueError("error lists must be aligned")
    outcomes = [compare(float(a), float(b), threshold) for a, b in zip(errors_a, errors_b)]
    return WtlTally(outcomes.count(1), outcomes.count(0), outcomes.count(-1))


def median(values) -> float:
    """Median; the mean of the two central values for even counts."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return math.nan
    return float(np.median(values))


# ---------------------------------------------------------------- Wilcoxon


def _signed_ranks(a, b):
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    d = d[d != 0]
    if d.size == 0:
        raise AllZeroDifferences("every paired difference is zero")
    ranks = rankdata(np.abs(d))
    return d, ranks


def _exact_null_counts(ranks2: np.ndarray) -> np.ndarray:
    """Number of sign assignments giving each value of 2 * W+ (ranks doubled to integers)."""
    total = int(ranks2.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in ranks2:
        r = int(r)
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts = counts + shifted
    return counts


def wilcoxon_statistic(a, b) -> float:
    """Sum of ranks of the positive differences (W+)."""
    d, ranks = _signed_ranks(a, b)
    return float(ranks[d > 0].sum())


def wilcoxon_signed_rank(a, b, method: str = "auto") -> float:
    """Two-sided p-value of the Wilcoxon signed-rank test.

    Zero differences are dropped and tied magnitudes get average ranks.  The
    null distribution is exact (every sign assignment counted) for up to 25
    non-zero differences; beyond that a normal approximation with tie and
    continuity corrections is used.
    """
    d, ranks = _signed_ranks(a, b)
    n = len(d)
    if method == "auto":
        method = "exact" if n <= EXACT_MAX_N else "approx"
    w_plus = ranks[d > 0].sum()
    if method == "exact":
        ranks2 = np.rint(2 * ranks).astype(np.int64)
        counts = _exact_null_counts(ranks2)
        w2 = int(round(2 * w_plus))
        total = counts.sum()
        lower = counts[: w2 + 1].sum() / total
        upper = counts[w2:].sum() / total
        return float(min(1.0, 2.0 * min(lower, upper)))
    if method != "approx":
        raise ValueError(f"unknown method {method!r}")
    mu = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts ** 3 - tie_counts) / 48.0
    if var <= 0:
        return 1.0
    z = max(abs(w_plus - mu) - 0.5, 0.0) / math.sqrt(var)
    return float(min(1.0, 2.0 * norm.sf(z)))


# ---------------------------------------------------------------- Friedman


def friedman_statistic(matrix) -> float:
    """Tie-corrected Friedman chi-square for a (targets x models) error matrix."""
    X = np.asarray(matrix, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2 or X.shape[1] < 2:
        raise ValueError("need at least 2 targets and 2 models")
    n, k = X.shape
    R = np.apply_along_axis(rankdata, 1, X)
    rank_sums = R.sum(axis=0)
    stat = 12.0 / (n * k * (k + 1)) * np.sum(rank_sums ** 2) - 3.0 * n * (k + 1)
    ties = 0.0
    for row in X:
        _, c = np.unique(row, return_counts=True)
        ties += np.sum(c ** 3 - c)
    correction = 1.0 - ties / (n * (k ** 3 - k))
    if correction <= 0:
        raise DegenerateRanks("every row is constant")
    return float(stat / correction)


def friedman(matrix) -> float:
    X = np.asarray(matrix, dtype=np.float64)
    stat = friedman_statistic(X)
    return float(chi2.sf(stat, X.shape[1] - 1))
