"""kNN graphs with Gaussian weights, Laplacians, coherence, spectral gaps
and Kron reduction."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

from .errors import CPCAError, DimensionError, SingularBlockError
from .linalg import EigenPairs, as_csr

DEFAULT_K = 10
KRON_PRUNE = 1e-12
LAPLACIAN_KINDS = ("combinatorial", "normalized")


@dataclass(frozen=True)
class GraphModel:
    """An undirected weighted graph and its Laplacian.

    ``W`` is symmetric with zero diagonal and weights in ``[0, 1]``.
    """

    W: sp.csr_matrix
    laplacian: sp.csr_matrix
    laplacian_kind: str = "combinatorial"
    K: int = DEFAULT_K
    sigma2: float = 1.0

    @property
    def n_nodes(self) -> int:
        return int(self.W.shape[0])

    @property
    def degrees(self) -> np.ndarray:
        return np.asarray(self.W.sum(axis=1)).ravel()


def laplacian(W, kind: str = "combinatorial") -> sp.csr_matrix:
    """Combinatorial ``D - W`` or normalized ``I - D^-1/2 W D^-1/2`` Laplacian."""
    if kind not in LAPLACIAN_KINDS:
        raise ValueError(f"unknown laplacian kind {kind!r}")
    W = as_csr(W)
    d = np.asarray(W.sum(axis=1)).ravel()
    if kind == "combinatorial":
        return as_csr(sp.diags(d) - W)
    inv_sqrt = np.zeros_like(d)
    inv_sqrt[d > 0] = 1.0 / np.sqrt(d[d > 0])
    Dm = sp.diags(inv_sqrt)
    return as_csr(sp.diags((d > 0).astype(float)) - Dm @ W @ Dm)


def graph_from_weights(W, kind: str = "combinatorial", K: int = DEFAULT_K,
                       sigma2: float = 1.0) -> GraphModel:
    W = as_csr(W)
    if W.shape[0] != W.shape[1]:
        raise DimensionError(f"adjacency must be square, got {W.shape}")
    W.setdiag(0.0)
    W = as_csr(W)
    return GraphModel(W=W, laplacian=laplacian(W, kind), laplacian_kind=kind, K=K, sigma2=sigma2)


def _squared_distances_block(P: np.ndarray, rows: slice, sq: np.ndarray) -> np.ndarray:
    G = P[rows] @ P.T
    D2 = sq[rows, None] + sq[None, :] - 2.0 * G
    np.maximum(D2, 0.0, out=D2)
    return D2


def knn_indices(points: np.ndarray, K: int, chunk: int = 1024) -> np.ndarray:
    """Indices of the ``K`` nearest neighbours of every point (self excluded).

    Brute force over all pairs; equal distances are broken by lower index.
    """
    n = points.shape[0]
    sq = np.einsum("ij,ij->i", points, points)
    out = np.empty((n, K), dtype=np.int64)
    for start in range(0, n, chunk):
        rows = slice(start, min(start + chunk, n))
        D2 = _squared_distances_block(points, rows, sq)
        D2[np.arange(D2.shape[0]), np.arange(rows.start, rows.stop)] = np.inf
        out[rows] = np.argsort(D2, axis=1, kind="stable")[:, :K]
    return out


def gaussian_knn_weights(points: np.ndarray, K: int, sigma2: float | None = None
                         ) -> tuple[sp.csr_matrix, float]:
    """Union-symmetrised kNN adjacency with ``exp(-d^2 / sigma2)`` weights.

    When ``sigma2`` is None it is the mean squared distance from each point
    to its K neighbours, averaged over points.
    """
    n = points.shape[0]
    nbrs = knn_indices(points, K)
    src = np.repeat(np.arange(n), K)
    dst = nbrs.ravel()
    diff = points[src] - points[dst]
    d2 = np.einsum("ij,ij->i", diff, diff)
    if sigma2 is None:
        sigma2 = float(d2.mean())
    if sigma2 > 0:
        w = np.exp(-d2 / sigma2)
    else:
        w = np.ones_like(d2)
    Wd = sp.csr_matrix((w, (src, dst)), shape=(n, n))
    W = Wd.maximum(Wd.T)
    return as_csr(W), float(sigma2)


def build_knn_graph(X: np.ndarray, axis: str = "cols", K: int = DEFAULT_K,
                    kind: str = "combinatorial", sigma2: float | None = None) -> GraphModel:
    """Gaussian-kernel kNN graph between the rows or the columns of ``X``.

    Parameters
    ----------
    X : (p, n) array
        Data matrix, features by samples.
    axis : {"cols", "rows"}
        ``"cols"`` connects the n samples, ``"rows"`` the p features.
    K : int
        Neighbours per point before union symmetrisation.
    kind : {"combinatorial", "normalized"}
    sigma2 : float, optional
        Kernel bandwidth; defaults to the mean squared kNN distance.
    """
    X = np.asarray(X, dtype=np.float64)
    if axis not in ("rows", "cols"):
        raise ValueError(f"axis must be 'rows' or 'cols', got {axis!r}")
    points = X.T if axis == "cols" else X
    points = np.ascontiguousarray(points)
    n = points.shape[0]
    if K < 1:
        raise ValueError("K must be at least 1")
    if n < K + 1:
        raise CPCAError(f"need at least K+1={K + 1} points along {axis}, got {n}")
    n_distinct = np.unique(points, axis=0).shape[0]
    if n_distinct < K:
        raise CPCAError(f"only {n_distinct} distinct points along {axis}, fewer than K={K}")
    W, s2 = gaussian_knn_weights(points, K, sigma2)
    return graph_from_weights(W, kind=kind, K=K, sigma2=s2)


def connected_components(A) -> tuple[int, np.ndarray]:
    """Component count and per-node labels of the graph underlying ``A``
    (adjacency or Laplacian; the diagonal is ignored)."""
    A = sp.csr_matrix(A)
    return csgraph.connected_components(A != 0, directed=False)


def uncovered_components(L, known) -> tuple[list[int], list[int]]:
    """Components of ``L`` that contain none of the ``known`` nodes, and one
    representative node of each."""
    ncomp, labels = connected_components(L)
    covered = np.zeros(ncomp, dtype=bool)
    covered[labels[np.asarray(known, dtype=np.int64)]] = True
    missing = [int(c) for c in np.flatnonzero(~covered)]
    reps = [int(np.flatnonzero(labels == c)[0]) for c in missing]
    return missing, reps


def require_coverage(L, known, what: str = "graph") -> None:
    missing, reps = uncovered_components(L, known)
    if missing:
        raise SingularBlockError(
            f"singular interior block on {what}: components {missing} "
            f"(e.g. nodes {reps}) contain no sampled node",
            components=missing, nodes=reps)


def _check_index_set(idx, n: int) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise DimensionError(f"index set out of range for {n} nodes")
    if np.unique(idx).size != idx.size:
        raise ValueError("index set contains duplicates")
    return idx


def complement(idx: np.ndarray, n: int) -> np.ndarray:
    mask = np.ones(n, dtype=bool)
    mask[idx] = False
    return np.flatnonzero(mask)


def kron_reduce(L, keep) -> sp.csr_matrix:
    """Kron reduction (Schur complement) of a Laplacian onto ``keep``.

    ``L(keep, keep) - L(keep, rest) L(rest, rest)^-1 L(rest, keep)``, rows and
    columns in the order of ``keep``. Entries below 1e-12 in magnitude are
    dropped.

    Raises
    ------
    SingularBlockError
        If some connected component has no kept node.
    """
    L = as_csr(L)
    n = L.shape[0]
    keep = _check_index_set(keep, n)
    rest = complement(keep, n)
    L_kk = L[keep][:, keep]
    if rest.size == 0:
        return as_csr(L_kk)
    require_coverage(L, keep, "kron reduction")
    L_kr = L[keep][:, rest]
    L_rr = L[rest][:, rest].tocsc()
    # only kept nodes adjacent to the eliminated set receive fill-in
    touching = np.flatnonzero(np.diff(L_kr.indptr))
    R = L_kk.toarray()
    if touching.size:
        B = L_kr[touching]
        Z = spla.splu(L_rr).solve(B.T.toarray())
        R[np.ix_(touching, touching)] -= B @ Z
    R = 0.5 * (R + R.T)
    R[np.abs(R) < KRON_PRUNE] = 0.0
    return as_csr(R)


@dataclass(frozen=True)
class CoherenceReport:
    k: int
    nu: float
    per_node: np.ndarray  # sqrt(n) * ||row i of the first-k eigenvector block||


def cumulative_coherence(basis: EigenPairs, k: int) -> CoherenceReport:
    """Cumulative coherence of order ``k`` of a Laplacian eigenbasis."""
    if k < 1 or k > basis.k:
        raise DimensionError(f"coherence order {k} exceeds basis order {basis.k}")
    n = basis.n
    per_node = np.sqrt(n) * np.linalg.norm(basis.eigenvectors[:, :k], axis=1)
    return CoherenceReport(k=k, nu=float(per_node.max()), per_node=per_node)


@dataclass(frozen=True)
class SpectralGap:
    k: int
    lambda_k: float
    lambda_k1: float

    @property
    def ratio(self) -> float:
        return self.lambda_k / self.lambda_k1


def spectral_gap(basis: EigenPairs, k: int) -> SpectralGap:
    """``(lambda_k, lambda_{k+1})`` with 1-based indices into the ascending
    spectrum; ``lambda_k`` at round-off level (<= 1e-12) is reported as 0."""
    if k < 1 or basis.k < k + 1:
        raise DimensionError(f"spectral gap of order {k} needs {k + 1} eigenvalues, have {basis.k}")
    lk = float(basis.eigenvalues[k - 1])
    lk = 0.0 if lk <= 1e-12 else lk
    lk1 = max(float(basis.eigenvalues[k]), 0.0)
    if lk1 <= 1e-14:
        raise CPCAError(f"gap undefined: graph has > {k} components")
    return SpectralGap(k=k, lambda_k=lk, lambda_k1=lk1)
