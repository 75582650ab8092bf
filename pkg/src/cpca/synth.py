"""Synthetic data: low-rank matrices on graphs, Gaussian blobs, and noise."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError
from .graph import GraphModel, gaussian_knn_weights, graph_from_weights
from .linalg import as_csr, sym_eig


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed)))


def split_sizes(n: int, k: int) -> np.ndarray:
    """Sizes of ``k`` contiguous near-equal blocks covering ``n`` nodes."""
    base, extra = divmod(n, k)
    return np.array([base + (i < extra) for i in range(k)], dtype=np.int64)


def component_graph(n: int, k: int, eta: float = 0.0, K: int = 5, seed: int = 0,
                    kind: str = "combinatorial") -> tuple[GraphModel, np.ndarray]:
    """Graph with ``k`` connected blocks of contiguous nodes.

    Each block is a Gaussian kNN graph on random planar points plus a path
    through its nodes (so the block is connected). With ``eta > 0`` one edge
    of weight ``eta`` joins consecutive blocks at random nodes.

    Returns the graph and the block label of every node.
    """
    if not (1 <= k <= n):
        raise DimensionError(f"need 1 <= k <= n, got k={k}, n={n}")
    rng = _rng(seed)
    sizes = split_sizes(n, k)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    blocks = []
    for m in sizes:
        if m == 1:
            blocks.append(sp.csr_matrix((1, 1)))
            continue
        pts = rng.random((m, 2))
        Wb, _ = gaussian_knn_weights(pts, min(K, m - 1))
        path = sp.diags([np.full(m - 1, 0.5)], [1], shape=(m, m))
        blocks.append(Wb.maximum(path + path.T))
    W = sp.block_diag(blocks, format="lil")
    if eta > 0:
        for c in range(k - 1):
            i = starts[c] + rng.integers(sizes[c])
            j = starts[c + 1] + rng.integers(sizes[c + 1])
            W[i, j] = W[j, i] = eta
    labels = np.repeat(np.arange(k), sizes)
    return graph_from_weights(as_csr(W), kind=kind, K=K), labels


def indicator_basis(labels: np.ndarray, k: int) -> np.ndarray:
    """Orthonormal block indicators, one column per label."""
    B = np.zeros((labels.size, k))
    B[np.arange(labels.size), labels] = 1.0
    return B / np.sqrt(B.sum(axis=0))


def _haar(k: int, rng: np.random.Generator) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((k, k)))
    return Q * np.sign(np.diag(R))


def mixing_matrix(k_r: int, k_c: int, mixing: str, rng: np.random.Generator) -> np.ndarray:
    """``gaussian``: i.i.d. normal; ``spread``: singular values evenly spaced
    in [0.5, 1] with Haar-random singular vectors."""
    if mixing == "gaussian":
        return rng.standard_normal((k_r, k_c))
    if mixing == "spread":
        m = min(k_r, k_c)
        S = np.zeros((k_r, k_c))
        S[np.arange(m), np.arange(m)] = np.linspace(1.0, 0.5, m)
        return _haar(k_r, rng) @ S @ _haar(k_c, rng).T
    raise ValueError(f"mixing must be 'gaussian' or 'spread', got {mixing!r}")


@dataclass
class SynthLowRank:
    Y: np.ndarray
    Gr: GraphModel
    Gc: GraphModel
    row_labels: np.ndarray
    col_labels: np.ndarray
    P: np.ndarray  # (p, k_r) orthonormal basis the columns of Y live in
    Q: np.ndarray  # (n, k_c)
    G: np.ndarray  # Y = P G Q'


def synth_lowrank(p: int, n: int, k_r: int, k_c: int, eta: float = 0.0, seed: int = 0,
                  mixing: str = "gaussian", K: int = 5,
                  kind: str = "combinatorial") -> SynthLowRank:
    """Matrix ``Y = P G Q'`` that is low-rank on a row and a column graph.

    ``eta = 0`` gives exactly ``k_r``/``k_c`` disconnected blocks and ``P``,
    ``Q`` are block indicators; ``eta > 0`` weakly links the blocks and
    ``P``, ``Q`` are the first eigenvectors of the Laplacians. ``Y`` is scaled
    to unit root-mean-square entry.
    """
    if not (1 <= k_r <= p and 1 <= k_c <= n):
        raise DimensionError(f"infeasible sizes: k_r={k_r}, p={p}, k_c={k_c}, n={n}")
    rng = _rng(seed)
    sub = rng.integers(0, 2**62, size=2)
    Gr, rl = component_graph(p, k_r, eta, K, int(sub[0]), kind)
    Gc, cl = component_graph(n, k_c, eta, K, int(sub[1]), kind)
    if eta > 0:
        P = sym_eig(Gr.laplacian, k_r).eigenvectors
        Q = sym_eig(Gc.laplacian, k_c).eigenvectors
    else:
        P, Q = indicator_basis(rl, k_r), indicator_basis(cl, k_c)
    G = mixing_matrix(k_r, k_c, mixing, rng)
    G *= np.sqrt(p * n) / np.linalg.norm(G)
    return SynthLowRank(Y=P @ G @ Q.T, Gr=Gr, Gc=Gc, row_labels=rl, col_labels=cl, P=P, Q=Q, G=G)


def synth_blobs(p: int, n: int, k: int, separation: float = 5.0, seed: int = 0
                ) -> tuple[np.ndarray, np.ndarray]:
    """``k`` Gaussian clusters of unit spread in ``p`` dimensions, as columns.

    Centres are normal with standard deviation ``separation``; cluster sizes
    differ by at most one.
    """
    if not (1 <= k <= n):
        raise DimensionError(f"need 1 <= k <= n, got k={k}, n={n}")
    rng = _rng(seed)
    centres = separation * rng.standard_normal((p, k))
    labels = rng.permutation(np.arange(n) % k)
    Y = centres[:, labels] + rng.standard_normal((p, n))
    return Y, labels


NOISE_KINDS = ("none", "gaussian", "laplacian", "sparse")


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "none"
    level: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"noise kind must be one of {NOISE_KINDS}")
        if not (0.0 <= self.level <= 1.0):
            raise ValueError("noise level must lie in [0, 1]")


def add_noise(Y: np.ndarray, spec: NoiseSpec) -> np.ndarray:
    """Corrupt ``Y`` (features x samples).

    ``gaussian``/``laplacian``: additive, with standard deviation
    ``level * std(feature)`` per row. ``sparse``: in every column,
    ``floor(level * p)`` entries are replaced by values drawn uniformly from
    that column's range.
    """
    Y = np.array(Y, dtype=np.float64)
    if spec.kind == "none" or spec.level == 0.0:
        return Y
    rng = _rng(spec.seed)
    p, n = Y.shape
    if spec.kind in ("gaussian", "laplacian"):
        std = spec.level * Y.std(axis=1, keepdims=True)
        if spec.kind == "gaussian":
            return Y + std * rng.standard_normal((p, n))
        return Y + (std / np.sqrt(2.0)) * rng.laplace(size=(p, n))
    m = int(np.floor(spec.level * p))
    lo, hi = Y.min(axis=0), Y.max(axis=0)
    for j in range(n):
        rows = rng.choice(p, size=m, replace=False)
        Y[rows, j] = rng.uniform(lo[j], hi[j], size=m)
    return Y
