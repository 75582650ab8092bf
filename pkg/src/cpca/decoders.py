"""Decoders from a compressed low-rank matrix back to full size.

Every decoder returns a :class:`DecodeResult`. The approximate decoders rest
on :func:`graph_upsample`, the harmonic (minimum Dirichlet energy) extension
of values known on a node subset.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import CPCAError, DimensionError
from .graph import SpectralGap, complement, require_coverage
from .linalg import EigenPairs, PCGInfo, as_csr, pcg_solve, thin_svd
from .sampling import SamplingPlan

VARIANTS = ("ideal", "alternate", "approx", "approx2", "approx3")
SIGMA_RULES = ("upsampled", "constant")


@dataclass(frozen=True)
class DecoderConfig:
    """Decoder settings.

    ``sigma_rule`` selects how singular values are transferred to full size
    by the approximate decoder: ``"constant"`` multiplies the compressed
    ones by ``sqrt(np / (rho_r rho_c (1 - delta_for_scaling)))``;
    ``"upsampled"`` (default) uses the norms of the upsampled singular
    vectors, ``sigma_i = s_i ||u_i|| ||v_i||``, which is exact whenever the
    upsampled subspaces are exact. ``gammap_r``/``gammap_c`` of 0 mean hard
    interpolation constraints; positive values switch to the regularised
    subspace problems.
    """

    variant: str = "approx"
    gamma: float = 1.0
    gammap_r: float = 0.0
    gammap_c: float = 0.0
    delta_for_scaling: float = 0.0
    rank_threshold: float = 0.1
    rank: int | None = None
    sigma_rule: str = "upsampled"
    pcg_tol: float = 1e-10
    pcg_max_iter: int = 5000

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.sigma_rule not in SIGMA_RULES:
            raise ValueError(f"sigma_rule must be one of {SIGMA_RULES}")
        if not (0.0 < self.rank_threshold < 1.0):
            raise ValueError("rank_threshold must lie in (0, 1)")
        if not (0.0 <= self.delta_for_scaling < 1.0):
            raise ValueError("delta_for_scaling must lie in [0, 1)")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.gammap_r < 0 or self.gammap_c < 0:
            raise ValueError("gammap_r/gammap_c must be non-negative")


@dataclass(frozen=True)
class LowRankFactors:
    U: np.ndarray  # (p, k), unit-norm columns
    sigma: np.ndarray  # (k,), nonincreasing
    V: np.ndarray  # (n, k), unit-norm columns
    scale_applied: bool = True

    @property
    def k(self) -> int:
        return int(self.sigma.size)

    def matrix(self) -> np.ndarray:
        return (self.U * self.sigma) @ self.V.T


@dataclass
class DecodeResult:
    X: np.ndarray
    variant: str
    rank: int | None = None
    factors: LowRankFactors | None = None
    converged: bool = True
    residual: float = 0.0
    details: dict = field(default_factory=dict)


def detect_rank(s: np.ndarray, threshold: float = 0.1) -> int:
    """Number of leading singular values with ``s_i / s_1 >= threshold``."""
    s = np.asarray(s, dtype=np.float64)
    if s.size == 0 or s[0] <= 0:
        raise CPCAError("cannot detect the rank of a zero matrix")
    return int(np.count_nonzero(s / s[0] >= threshold))


def graph_upsample(L, known, R, tol: float = 1e-10, max_iter: int = 5000,
                   return_info: bool = False):
    """Harmonic extension of ``R`` (values on ``known`` nodes) to all nodes.

    Solves ``min tr(S' L S)`` subject to ``S[known] = R``; the unknown rows
    are ``-L_aa^{-1} L_ab R``, computed column by column with Jacobi PCG.

    Raises
    ------
    SingularBlockError
        If a connected component of ``L`` holds no known node.
    """
    L = as_csr(L)
    n = L.shape[0]
    known = np.asarray(known, dtype=np.int64).ravel()
    R = np.asarray(R, dtype=np.float64)
    vector = R.ndim == 1
    R2 = R[:, None] if vector else R
    if R2.shape[0] != known.size:
        raise DimensionError(f"{known.size} known nodes but R has {R2.shape[0]} rows")
    S = np.zeros((n, R2.shape[1]))
    S[known] = R2
    unknown = complement(known, n)
    info = PCGInfo(iterations=0, converged=True, residual=0.0)
    if unknown.size:
        require_coverage(L, known, "graph upsampling")
        Lu = L[unknown]
        L_aa = Lu[:, unknown]
        L_ab = Lu[:, known]
        S_a, info = pcg_solve(L_aa, -(L_ab @ R2), tol=tol, max_iter=max_iter)
        S[unknown] = S_a
    out = S[:, 0] if vector else S
    return (out, info) if return_info else out


def _known_for(plan: SamplingPlan, side: str) -> np.ndarray:
    if side == "U":
        return plan.omega_r
    if side == "V":
        return plan.omega_c
    raise ValueError(f"side must be 'U' or 'V', got {side!r}")


def intermediate_uv_decode(Rt, plan: SamplingPlan, L, gammap: float, side: str = "U",
                           tol: float = 1e-10, max_iter: int = 5000) -> tuple[np.ndarray, PCGInfo]:
    """Regularised subspace decoding ``(M'M + gammap L) U = M' Ut``.

    This is the graph low-pass smoothing of the sampled subspace; as
    ``gammap -> 0`` it tends to :func:`graph_upsample`.
    """
    if gammap <= 0:
        raise ValueError("gammap must be positive; use graph_upsample for the hard constraint")
    L = as_csr(L)
    n = L.shape[0]
    known = _known_for(plan, side)
    Rt = np.asarray(Rt, dtype=np.float64)
    vector = Rt.ndim == 1
    R2 = Rt[:, None] if vector else Rt
    mask = np.zeros(n)
    mask[known] = 1.0
    A = as_csr(sp.diags(mask) + gammap * L)
    rhs = np.zeros((n, R2.shape[1]))
    rhs[known] = R2
    S, info = pcg_solve(A, rhs, tol=tol, max_iter=max_iter)
    return (S[:, 0] if vector else S), info


def _decode_subspace(Rt, plan, L, side, gammap, cfg: DecoderConfig):
    if gammap > 0:
        return intermediate_uv_decode(Rt, plan, L, gammap, side, cfg.pcg_tol, cfg.pcg_max_iter)
    return graph_upsample(L, _known_for(plan, side), Rt, cfg.pcg_tol, cfg.pcg_max_iter,
                          return_info=True)


def _unit_columns(M: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(M, axis=0)
    if np.any(norms <= np.finfo(float).tiny):
        raise CPCAError(f"upsampled {what} has a zero column; the detected rank is too high")
    return M / norms, norms


def _sign_fix(U: np.ndarray, V: np.ndarray) -> None:
    for j in range(U.shape[1]):
        i = int(np.argmax(np.abs(U[:, j])))
        if U[i, j] < 0:
            U[:, j] *= -1.0
            V[:, j] *= -1.0


def _compressed_svd(Xt, plan, cfg):
    Xt = np.asarray(Xt, dtype=np.float64)
    if Xt.shape != (plan.rho_r, plan.rho_c):
        raise DimensionError(f"compressed matrix is {Xt.shape}, plan expects {(plan.rho_r, plan.rho_c)}")
    Ut, s, Vt = thin_svd(Xt)
    k = cfg.rank if cfg.rank is not None else detect_rank(s, cfg.rank_threshold)
    return Ut[:, :k], s[:k], Vt[:, :k], k


def approx_decode(Xt, plan: SamplingPlan, Lr, Lc, cfg: DecoderConfig = DecoderConfig()) -> DecodeResult:
    """Subspace-upsampling decoder.

    SVD of the compressed matrix, rank cut at ``rank_threshold``, per-column
    upsampling of the left factors on ``Lr`` and the right factors on ``Lc``,
    unit normalisation, singular value transfer (``cfg.sigma_rule``), and
    ``X = U diag(sigma) V'``.
    """
    Ut, s, Vt, k = _compressed_svd(Xt, plan, cfg)
    U_up, info_u = _decode_subspace(Ut, plan, Lr, "U", cfg.gammap_r, cfg)
    V_up, info_v = _decode_subspace(Vt, plan, Lc, "V", cfg.gammap_c, cfg)
    U, nu = _unit_columns(U_up, "U")
    V, nv = _unit_columns(V_up, "V")
    if cfg.sigma_rule == "constant":
        sigma = math.sqrt(plan.norm_const / (1.0 - cfg.delta_for_scaling)) * s
    else:
        sigma = s * nu * nv
    order = np.argsort(-sigma, kind="stable")
    U, V, sigma = U[:, order], V[:, order], sigma[order]
    _sign_fix(U, V)
    factors = LowRankFactors(U=U, sigma=sigma, V=V, scale_applied=True)
    return DecodeResult(
        X=factors.matrix(), variant="approx", rank=k, factors=factors,
        converged=info_u.converged and info_v.converged,
        residual=max(info_u.residual, info_v.residual),
        details={"compressed_sigma": s.tolist(), "u_norms": nu.tolist(), "v_norms": nv.tolist()})


def approx_decode_onesided(Xt, plan: SamplingPlan, L, Y, side: str = "U",
                           cfg: DecoderConfig = DecoderConfig()) -> DecodeResult:
    """Upsample one subspace and project the full data onto it.

    ``side="U"`` upsamples the left factors on the row graph and returns
    ``X = B B' Y``; ``side="V"`` upsamples the right factors on the column
    graph and returns ``X = Y B B'``. ``B`` is an orthonormal basis of the
    upsampled subspace, so the map is an orthogonal projector.
    """
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape != (plan.p, plan.n):
        raise DimensionError(f"data is {Y.shape}, plan expects {(plan.p, plan.n)}")
    Ut, s, Vt, k = _compressed_svd(Xt, plan, cfg)
    if side == "U":
        S_up, info = _decode_subspace(Ut, plan, L, "U", cfg.gammap_r, cfg)
    else:
        S_up, info = _decode_subspace(Vt, plan, L, "V", cfg.gammap_c, cfg)
    S_unit, _ = _unit_columns(S_up, side)
    B, _ = np.linalg.qr(S_unit)
    X = B @ (B.T @ Y) if side == "U" else (Y @ B) @ B.T
    return DecodeResult(X=X, variant="approx2" if side == "U" else "approx3", rank=k,
                        converged=info.converged, residual=info.residual)


def ideal_decode(Xt, plan: SamplingPlan, Pk, Qk) -> DecodeResult:
    """Least-squares fit inside ``span(P_k) x span(Q_k)``.

    ``X = P A Q'`` where ``A`` is the minimum-norm solution of
    ``min ||P[omega_r] A Q[omega_c]' - Xt||_F``.

    Raises
    ------
    CPCAError
        If the sampled eigenvector blocks lose rank.
    """
    P = Pk.eigenvectors if isinstance(Pk, EigenPairs) else np.asarray(Pk, dtype=np.float64)
    Q = Qk.eigenvectors if isinstance(Qk, EigenPairs) else np.asarray(Qk, dtype=np.float64)
    Xt = np.asarray(Xt, dtype=np.float64)
    if Xt.shape != (plan.rho_r, plan.rho_c):
        raise DimensionError(f"compressed matrix is {Xt.shape}")
    if P.shape[0] != plan.p or Q.shape[0] != plan.n:
        raise DimensionError("eigenbases do not match the plan dimensions")
    Ps, Qs = P[plan.omega_r], Q[plan.omega_c]
    for name, B in (("row", Ps), ("column", Qs)):
        if np.linalg.matrix_rank(B) < B.shape[1]:
            raise CPCAError(f"sampled {name} eigenvector block is rank deficient; "
                            f"sampling too aggressive for k={B.shape[1]}")
    A = np.linalg.pinv(Ps) @ Xt @ np.linalg.pinv(Qs).T
    resid = float(np.linalg.norm(Ps @ A @ Qs.T - Xt))
    return DecodeResult(X=P @ A @ Q.T, variant="ideal", rank=min(P.shape[1], Q.shape[1]),
                        residual=resid, details={"fit_residual": resid})


def alternate_gammas(gamma: float, gap_r: SpectralGap, gap_c: SpectralGap) -> tuple[float, float]:
    """``(gamma / lambda_{k_r+1}, gamma / lambda_{k_c+1})``."""
    return gamma / gap_r.lambda_k1, gamma / gap_c.lambda_k1


def alternate_decode(Xt, plan: SamplingPlan, Lr, Lc, gaps: tuple[SpectralGap, SpectralGap],
                     cfg: DecoderConfig = DecoderConfig(variant="alternate")) -> DecodeResult:
    """Dirichlet-regularised fit of the sampled entries.

    Minimises ``||M_r X M_c - Xt||^2 + gc tr(X Lc X') + gr tr(X' Lr X)`` with
    ``gr, gc`` from :func:`alternate_gammas`, by PCG on the normal equations.
    ``converged`` is False when PCG hits its iteration cap.
    """
    Lr, Lc = as_csr(Lr), as_csr(Lc)
    p, n = plan.p, plan.n
    Xt = np.asarray(Xt, dtype=np.float64)
    if Xt.shape != (plan.rho_r, plan.rho_c):
        raise DimensionError(f"compressed matrix is {Xt.shape}")
    gr, gc = alternate_gammas(cfg.gamma, gaps[0], gaps[1])
    mask = np.zeros((p, n))
    mask[np.ix_(plan.omega_r, plan.omega_c)] = 1.0
    rhs = np.zeros((p, n))
    rhs[np.ix_(plan.omega_r, plan.omega_c)] = Xt

    def op(block):
        out = np.empty_like(block)
        for j in range(block.shape[1]):
            Xm = block[:, j].reshape(p, n)
            out[:, j] = (mask * Xm + gc * (Lc @ Xm.T).T + gr * (Lr @ Xm)).ravel()
        return out

    diag = (mask + gc * Lc.diagonal()[None, :] + gr * Lr.diagonal()[:, None]).ravel()
    x, info = pcg_solve(op, rhs.ravel(), tol=cfg.pcg_tol, max_iter=cfg.pcg_max_iter, precond=diag)
    return DecodeResult(X=x.reshape(p, n), variant="alternate", converged=info.converged,
                        residual=info.residual,
                        details={"gamma_r_bar": gr, "gamma_c_bar": gc, "pcg_iterations": info.iterations})
