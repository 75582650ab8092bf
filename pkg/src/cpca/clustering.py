"""k-means on compressed data, label decoding on the column graph, and the
clustering error metric. Samples are columns throughout."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .decoders import graph_upsample
from .errors import DimensionError
from .sampling import SamplingPlan


@dataclass(frozen=True)
class ClusterLabels:
    assignments: np.ndarray  # (n,) ints in 0..k-1
    k: int

    def __post_init__(self):
        a = np.asarray(self.assignments, dtype=np.int64).ravel()
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if a.size and (a.min() < 0 or a.max() >= self.k):
            raise ValueError(f"assignments must lie in 0..{self.k - 1}")
        a.setflags(write=False)
        object.__setattr__(self, "assignments", a)

    @property
    def n(self) -> int:
        return int(self.assignments.size)

    @property
    def indicator(self) -> np.ndarray:
        C = np.zeros((self.n, self.k))
        C[np.arange(self.n), self.assignments] = 1.0
        return C

    @classmethod
    def from_indicator(cls, C: np.ndarray) -> "ClusterLabels":
        """Row-wise max pooling; ties go to the lowest column index."""
        C = np.asarray(C, dtype=np.float64)
        return cls(np.argmax(C, axis=1), C.shape[1])


def _sq_dists(P: np.ndarray, C: np.ndarray) -> np.ndarray:
    # P: (m, d) points, C: (k, d) centres
    D = (P * P).sum(1)[:, None] + (C * C).sum(1)[None, :] - 2.0 * P @ C.T
    return np.maximum(D, 0.0)


def _kmeanspp(P: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    m = P.shape[0]
    centres = np.empty((k, P.shape[1]))
    centres[0] = P[rng.integers(m)]
    d2 = _sq_dists(P, centres[:1])[:, 0]
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(m))
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, m - 1)
        centres[j] = P[idx]
        d2 = np.minimum(d2, _sq_dists(P, centres[j:j + 1])[:, 0])
    return centres


def _lloyd(P: np.ndarray, centres: np.ndarray, max_iter: int) -> tuple[np.ndarray, float]:
    k = centres.shape[0]
    labels = None
    for _ in range(max_iter):
        D = _sq_dists(P, centres)
        new = np.argmin(D, axis=1)
        counts = np.bincount(new, minlength=k)
        for j in np.flatnonzero(counts == 0):
            # reseed an empty cluster with the point farthest from its centre,
            # taken from a cluster that keeps at least one member
            d = D[np.arange(P.shape[0]), new]
            d = np.where(counts[new] > 1, d, -np.inf)
            far = int(np.argmax(d))
            centres[j] = P[far]
            counts[new[far]] -= 1
            new[far] = j
            counts[j] = 1
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(k):
            centres[j] = P[labels == j].mean(axis=0)
    D = _sq_dists(P, centres)
    labels = np.argmin(D, axis=1)
    inertia = float(D[np.arange(P.shape[0]), labels].sum())
    return labels, inertia


def kmeans(X: np.ndarray, k: int, restarts: int = 10, seed: int = 0,
           max_iter: int = 300) -> ClusterLabels:
    """Cluster the columns of ``X`` with k-means++ seeding and Lloyd updates.

    The best of ``restarts`` runs by within-cluster sum of squares is kept;
    restart ``r`` draws from ``Philox(key=seed + r)``.
    """
    X = np.asarray(X, dtype=np.float64)
    P = np.ascontiguousarray(X.T)
    if not (1 <= k <= P.shape[0]):
        raise DimensionError(f"k={k} must lie in 1..{P.shape[0]} (number of columns)")
    best, best_inertia = None, np.inf
    for r in range(max(restarts, 1)):
        rng = np.random.Generator(np.random.Philox(key=seed + r))
        labels, inertia = _lloyd(P, _kmeanspp(P, k, rng), max_iter)
        if inertia < best_inertia:
            best, best_inertia = labels, inertia
    return ClusterLabels(best, k)


def decode_labels(Ct: ClusterLabels, plan: SamplingPlan, Lc, tol: float = 1e-10,
                  max_iter: int = 5000) -> ClusterLabels:
    """Extend sampled-column labels to all columns.

    Each indicator column is upsampled on ``Lc`` from the sampled columns and
    every node takes the label of its largest upsampled entry.
    """
    if Ct.n != plan.rho_c:
        raise DimensionError(f"{Ct.n} labels for {plan.rho_c} sampled columns")
    C = graph_upsample(Lc, plan.omega_c, Ct.indicator, tol, max_iter)
    return ClusterLabels.from_indicator(C)


def clustering_error(pred: ClusterLabels, truth: ClusterLabels) -> float:
    """One minus the best agreement rate over relabelings of ``pred``."""
    if pred.k != truth.k:
        raise ValueError(f"cluster counts differ: {pred.k} vs {truth.k}")
    if pred.n != truth.n:
        raise DimensionError(f"label vectors differ in length: {pred.n} vs {truth.n}")
    if pred.n == 0:
        return 0.0
    M = np.zeros((pred.k, truth.k), dtype=np.int64)
    np.add.at(M, (pred.assignments, truth.assignments), 1)
    r, c = linear_sum_assignment(M, maximize=True)
    return 1.0 - M[r, c].sum() / pred.n
