"""Linear algebra kernels: CSR helpers, PCG, power iteration, symmetric
eigenpairs and thin SVD.

Sparse matrices are ``scipy.sparse.csr_matrix`` in canonical form (sorted
column indices, no duplicates, no stored zeros). Dense matrices are plain
``numpy`` arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import BreakdownError, DimensionError

Operator = Union[np.ndarray, sp.spmatrix, Callable[[np.ndarray], np.ndarray]]


def as_csr(A) -> sp.csr_matrix:
    """Return ``A`` as a canonical CSR matrix (a copy when ``A`` is sparse)."""
    M = sp.csr_matrix(A, dtype=np.float64, copy=True)
    M.sum_duplicates()
    M.eliminate_zeros()
    M.sort_indices()
    return M


def spmv(A: sp.spmatrix, x: np.ndarray) -> np.ndarray:
    """Sparse matrix-vector product ``A @ x``.

    The CSR kernel sums each row sequentially, so results are reproducible
    bit for bit on a given platform.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or A.shape[1] != x.shape[0]:
        raise DimensionError(f"spmv: matrix is {A.shape}, vector has shape {x.shape}")
    return sp.csr_matrix(A) @ x


@dataclass(frozen=True)
class PCGInfo:
    iterations: int
    converged: bool
    residual: float  # max over columns of ||Ax - b|| / ||b||


def _apply(A: Operator, X: np.ndarray) -> np.ndarray:
    if callable(A) and not isinstance(A, (np.ndarray, sp.spmatrix)):
        return np.asarray(A(X), dtype=np.float64)
    return np.asarray(A @ X, dtype=np.float64)


def pcg_solve(
    A: Operator,
    b: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 5000,
    precond: Union[str, np.ndarray, None] = "jacobi",
    x0: np.ndarray | None = None,
) -> tuple[np.ndarray, PCGInfo]:
    """Preconditioned conjugate gradient for SPD (or PSD, consistent) systems.

    ``b`` may be a vector or an ``(n, r)`` block whose columns are solved as
    independent systems (each column keeps its own step sizes). ``A`` is a
    dense/sparse matrix or a callable mapping an ``(n, m)`` block to
    ``A @ block``.

    ``precond`` is ``"jacobi"`` (needs a matrix ``A``), ``"none"``/``None``,
    or an explicit array holding the diagonal of ``A``.

    Returns ``(x, info)``; columns satisfy ``||Ax - b|| <= tol ||b||``
    unless ``info.converged`` is False (max_iter reached).

    Raises
    ------
    BreakdownError
        If a search direction has non-positive curvature ``p'Ap <= 0``.
    """
    b = np.asarray(b, dtype=np.float64)
    vector = b.ndim == 1
    B = b[:, None] if vector else b
    n, r = B.shape
    if not callable(A) or isinstance(A, (np.ndarray, sp.spmatrix)):
        if A.shape != (n, n):
            raise DimensionError(f"pcg_solve: operator {A.shape} vs rhs {b.shape}")

    if isinstance(precond, str) and precond == "jacobi":
        if callable(A) and not isinstance(A, (np.ndarray, sp.spmatrix)):
            raise ValueError("jacobi preconditioner needs a matrix operator or an explicit diagonal")
        diag = np.asarray(A.diagonal(), dtype=np.float64)
    elif precond is None or (isinstance(precond, str) and precond == "none"):
        diag = None
    else:
        diag = np.asarray(precond, dtype=np.float64)
    if diag is not None:
        inv_diag = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 1.0)[:, None]

    def psolve(R):
        return R * inv_diag if diag is not None else R.copy()

    X = np.zeros((n, r)) if x0 is None else np.array(x0, dtype=np.float64).reshape(n, r)
    bnorm = np.linalg.norm(B, axis=0)
    target = tol * bnorm
    total_iter = 0
    R = B - _apply(A, X) if x0 is not None else B.copy()

    # Restart from the true residual if the recursive one drifted below target.
    for _restart in range(8):
        rnorm = np.linalg.norm(R, axis=0)
        active = rnorm > target
        if not active.any() or total_iter >= max_iter:
            break
        Z = psolve(R)
        P = Z.copy()
        rz = np.einsum("ij,ij->j", R, Z)
        while total_iter < max_iter:
            total_iter += 1
            idx = np.flatnonzero(active)
            AP = _apply(A, P[:, idx])
            pap = np.einsum("ij,ij->j", P[:, idx], AP)
            if np.any(pap <= 0.0):
                bad = idx[np.argmax(pap <= 0.0)]
                raise BreakdownError(
                    f"pcg breakdown at iteration {total_iter}: non-positive curvature "
                    f"in column {bad}", iteration=total_iter)
            alpha = rz[idx] / pap
            X[:, idx] += P[:, idx] * alpha
            R[:, idx] -= AP * alpha
            rnorm[idx] = np.linalg.norm(R[:, idx], axis=0)
            still = rnorm[idx] > target[idx]
            active[idx] = still
            idx = idx[still]
            if idx.size == 0:
                break
            Zi = psolve(R[:, idx])
            rz_new = np.einsum("ij,ij->j", R[:, idx], Zi)
            P[:, idx] = Zi + P[:, idx] * (rz_new / rz[idx])
            rz[idx] = rz_new
        R = B - _apply(A, X)

    true_norm = np.linalg.norm(R, axis=0)
    rel = true_norm / np.where(bnorm > 0, bnorm, 1.0)
    info = PCGInfo(iterations=total_iter, converged=bool(np.all(true_norm <= target)),
                   residual=float(rel.max(initial=0.0)))
    return (X[:, 0] if vector else X), info


def power_iteration_norm(A, tol: float = 1e-10, seed: int = 0, max_iter: int = 10000) -> float:
    """Estimate the spectral norm of a symmetric matrix by power iteration.

    For a Laplacian this is its largest eigenvalue. The start vector is drawn
    from ``Philox(seed)`` so the estimate is reproducible.
    """
    n = A.shape[0]
    if n == 0:
        return 0.0
    rng = np.random.Generator(np.random.Philox(seed))
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = A @ v
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return 0.0
        if abs(nw - est) <= tol * nw:
            return nw
        est = nw
        v = w / nw
    return est


@dataclass(frozen=True)
class EigenPairs:
    """The ``k`` smallest eigenpairs of a symmetric matrix, ascending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # (n, k), orthonormal columns

    @property
    def k(self) -> int:
        return int(self.eigenvalues.shape[0])

    @property
    def n(self) -> int:
        return int(self.eigenvectors.shape[0])


def _fix_signs_first_nonzero(V: np.ndarray, atol: float = 1e-12) -> np.ndarray:
    V = V.copy()
    for j in range(V.shape[1]):
        nz = np.flatnonzero(np.abs(V[:, j]) > atol)
        if nz.size and V[nz[0], j] < 0:
            V[:, j] = -V[:, j]
    return V


def sym_eig(A, k: int | None = None) -> EigenPairs:
    """The ``k`` smallest eigenpairs of a symmetric matrix (dense LAPACK).

    Each eigenvector is sign-normalised so its first nonzero entry is
    positive.
    """
    n = A.shape[0]
    if k is None:
        k = n
    if k < 1 or k > n:
        raise DimensionError(f"sym_eig: requested k={k} eigenpairs of a {n}x{n} matrix")
    D = A.toarray() if sp.issparse(A) else np.array(A, dtype=np.float64)
    D = 0.5 * (D + D.T)
    w, V = scipy.linalg.eigh(D, subset_by_index=[0, k - 1])
    return EigenPairs(eigenvalues=w, eigenvectors=_fix_signs_first_nonzero(V))


def thin_svd(A: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD ``A = U diag(s) V'`` with ``s`` nonincreasing.

    Returns ``(U, s, V)``; each left singular vector is flipped so that its
    largest-magnitude entry is positive (``V`` follows).
    """
    A = np.asarray(A, dtype=np.float64)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    V = Vt.T.copy()
    for j in range(U.shape[1]):
        i = int(np.argmax(np.abs(U[:, j])))
        if U[i, j] < 0:
            U[:, j] = -U[:, j]
            V[:, j] = -V[:, j]
    return U, s, V
