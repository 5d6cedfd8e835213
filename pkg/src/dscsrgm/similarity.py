"""Lag-maximised cross-correlation similarity and k-means pool selection."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import NoValidLag, Undefined

MIN_OVERLAP = 3


def _overlap(nx: int, ny: int, tau: int) -> tuple:
    """Index range [lo, hi) of t such that x[t] and y[t + tau] both exist."""
    lo = max(0, -tau)
    hi = min(nx, ny - tau)
    return lo, hi


def cross_correlation_at_lag(x, y, tau: int) -> float:
    """Normalised correlation of x(t) with y(t + tau) over their overlap.

    Means are taken over the overlapping segments.  Raises ``Undefined`` if
    the overlap is shorter than 3 points or either segment is constant.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    lo, hi = _overlap(len(x), len(y), int(tau))
    if hi - lo < MIN_OVERLAP:
        raise Undefined(f"overlap at lag {tau} has {max(hi - lo, 0)} points")
    v = _cc(x, y, lo, hi, int(tau))
    if math.isnan(v):
        raise Undefined(f"constant segment at lag {tau}")
    return v


@njit(cache=True)
def _cc(x, y, lo, hi, tau):
    n = hi - lo
    sx = 0.0
    sy = 0.0
    xmin = x[lo]
    xmax = x[lo]
    ymin = y[lo + tau]
    ymax = y[lo + tau]
    for t in range(lo, hi):
        xv = x[t]
        yv = y[t + tau]
        sx += xv
        sy += yv
        xmin = min(xmin, xv)
        xmax = max(xmax, xv)
        ymin = min(ymin, yv)
        ymax = max(ymax, yv)
    if xmin == xmax or ymin == ymax:
        return np.nan
    mx = sx / n
    my = sy / n
    sxy = 0.0
    sxx = 0.0
    syy = 0.0
    for t in range(lo, hi):
        dx = x[t] - mx
        dy = y[t + tau] - my
        sxy += dx * dy
        sxx += dx * dx
        syy += dy * dy
    # variance can underflow to zero for subnormal spreads
    if sxx == 0.0 or syy == 0.0:
        return np.nan
    return sxy / (math.sqrt(sxx) * math.sqrt(syy))


@njit(cache=True)
def _max_cc(x, y, min_overlap):
    nx = x.shape[0]
    ny = y.shape[0]
    best = -np.inf
    found = False
    for tau in range(-(nx - min_overlap), ny - min_overlap + 1):
        lo = max(0, -tau)
        hi = min(nx, ny - tau)
        if hi - lo < min_overlap:
            continue
        v = _cc(x, y, lo, hi, tau)
        if v == v:
            found = True
            if v > best:
                best = v
    if not found:
        return np.nan
    return best


def similarity(x, y) -> float:
    """Maximum cross-correlation over every lag with at least 3 overlapping points."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if len(x) < MIN_OVERLAP or len(y) < MIN_OVERLAP:
        raise NoValidLag("both series need at least 3 points")
    v = _max_cc(x, y, MIN_OVERLAP)
    if math.isnan(v):
        raise NoValidLag("no lag has a non-constant overlap of 3 or more points")
    return float(v)


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    ids: tuple
    scores: np.ndarray

    def index(self, series_id: str) -> int:
        return self.ids.index(series_id)

    def to_dict(self) -> dict:
        return {"ids": list(self.ids), "scores": self.scores.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "SimilarityMatrix":
        return cls(tuple(d["ids"]), np.array(d["scores"], dtype=np.float64))


def build_matrix(pool) -> SimilarityMatrix:
    """Pairwise similarity over a pool of DefectSeries (target included)."""
    if len(pool) < 2:
        raise ValueError("need at least 2 series")
    ids = tuple(s.id for s in pool)
    if len(set(ids)) != len(ids):
        raise ValueError("series ids in a pool must be unique")
    arrays = [np.ascontiguousarray(s.counts, dtype=np.float64) for s in pool]
    n = len(pool)
    S = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            try:
                S[i, j] = S[j, i] = similarity(arrays[i], arrays[j])
            except NoValidLag as exc:
                raise NoValidLag(f"similarity({ids[i]}, {ids[j]}): {exc}") from exc
    S.flags.writeable = False
    return SimilarityMatrix(ids, S)


# ---------------------------------------------------------------- k-means


def _kmeanspp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = [X[int(rng.integers(n))]]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))
        centers.append(X[idx])
        d2 = np.minimum(d2, np.sum((X - X[idx]) ** 2, axis=1))
    return np.array(centers)


def _lloyd(X: np.ndarray, centers: np.ndarray, max_iter: int):
    labels = None
    for _ in range(max_iter):
        dist = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = np.argmin(dist, axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(centers.shape[0]):
            members = X[labels == j]
            # an emptied cluster keeps its previous centre
            if len(members):
                centers[j] = members.mean(axis=0)
    dist = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(dist, axis=1)
    inertia = float(dist[np.arange(len(X)), labels].sum())
    return labels, inertia


def kmeans(X, k: int, seed: int, n_init: int = 10, max_iter: int = 300) -> np.ndarray:
    """k-means++ seeded Lloyd iterations; best of ``n_init`` runs by inertia."""
    X = np.asarray(X, dtype=np.float64)
    rng = np.random.default_rng(seed)
    best_labels, best_inertia = None, math.inf
    for _ in range(n_init):
        labels, inertia = _lloyd(X, _kmeanspp(X, k, rng), max_iter)
        if inertia < best_inertia:
            best_labels, best_inertia = labels, inertia
    return _canonical(best_labels)


def _canonical(labels: np.ndarray) -> np.ndarray:
    # relabel clusters in order of first appearance
    mapping = {}
    for lab in labels:
        mapping.setdefault(int(lab), len(mapping))
    return np.array([mapping[int(lab)] for lab in labels], dtype=np.int64)


@dataclass(frozen=True)
class ClusterAssignment:
    k: int
    labels: dict
    target_id: str
    target_cluster: int
    selected_ids: tuple
    fallback: bool = False
    collapsed: bool = False
    n_clusters: int = field(default=0)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "n_clusters": self.n_clusters,
            "collapsed": self.collapsed,
            "target_id": self.target_id,
            "target_cluster": self.target_cluster,
            "fallback": self.fallback,
            "selected_ids": list(self.selected_ids),
            "labels": dict(self.labels),
        }


def cluster_and_select(matrix: SimilarityMatrix, target_id: str, k: int = 3,
                       seed: int = 0) -> ClusterAssignment:
    """Cluster similarity profiles (matrix rows) and pick the target's groupmates.

    If the target ends up alone in its cluster, the ceil(pool / k) series most
    similar to it are selected instead and ``fallback`` is set.
    """
    if target_id not in matrix.ids:
        raise KeyError(f"target {target_id!r} not in similarity matrix")
    if k < 1:
        raise ValueError("k must be >= 1")
    n = len(matrix.ids)
    ti = matrix.index(target_id)
    k_eff = min(k, n)
    labels = kmeans(matrix.scores, k_eff, seed)
    n_clusters = len(set(labels.tolist()))
    tc = int(labels[ti])
    selected = tuple(matrix.ids[i] for i in range(n) if i != ti and labels[i] == tc)
    fallback = False
    if not selected and n > 1:
        fallback = True
        n_pick = math.ceil((n - 1) / k)
        others = [i for i in range(n) if i != ti]
        # stable sort keeps pool order among equal scores
        others.sort(key=lambda i: -matrix.scores[ti, i])
        selected = tuple(matrix.ids[i] for i in sorted(others[:n_pick]))
    return ClusterAssignment(
        k=k,
        labels={sid: int(lab) for sid, lab in zip(matrix.ids, labels)},
        target_id=target_id,
        target_cluster=tc,
        selected_ids=selected,
        fallback=fallback,
        collapsed=n_clusters < k,
        n_clusters=n_clusters,
    )
