"""Graph-regularized low-rank recovery solved with FISTA.

Minimises ``phi(Y - X) + gamma_c tr(X Lc X') + gamma_r tr(X' Lr X)`` where
``phi`` is the entrywise l1 norm (default) or the squared Frobenius norm
(``loss="l2"``). With the l2 loss the objective is
``||Y - X||_F^2 + g(X)``, so its minimiser satisfies
``(Y - X) = gamma_c X Lc + gamma_r Lr X``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DivergenceError
from .linalg import power_iteration_norm


@dataclass(frozen=True)
class FrpcagConfig:
    gamma_r: float = 1.0
    gamma_c: float = 1.0
    loss: str = "l1"
    tol: float = 1e-8
    max_iter: int = 500
    step: float | None = None  # None: 1 / beta'
    power_tol: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        if self.gamma_r < 0 or self.gamma_c < 0:
            raise ValueError("gamma_r and gamma_c must be non-negative")
        if self.loss not in ("l1", "l2"):
            raise ValueError(f"loss must be 'l1' or 'l2', got {self.loss!r}")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.step is not None and self.step <= 0:
            raise ValueError("step must be positive")


@dataclass
class SolveTrace:
    iterations: int
    converged: bool
    final_rel_change: float
    initial_objective: float
    step: float
    beta: float
    objectives: list = field(default_factory=list)


def _right_mul(X: np.ndarray, L) -> np.ndarray:
    # X @ L for symmetric sparse L without densifying L
    return (L @ X.T).T


def dirichlet_energies(X: np.ndarray, Lr, Lc) -> tuple[float, float]:
    """``(tr(X' Lr X), tr(X Lc X'))``; a ``None`` Laplacian contributes 0."""
    er = float(np.sum(X * (Lr @ X))) if Lr is not None else 0.0
    ec = float(np.sum(X * _right_mul(X, Lc))) if Lc is not None else 0.0
    return er, ec


def loss_value(R: np.ndarray, loss: str) -> float:
    return float(np.abs(R).sum()) if loss == "l1" else float(np.sum(R * R))


def objective(X, Y, Lr, Lc, cfg: FrpcagConfig) -> float:
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.shape != Y.shape:
        raise DimensionError(f"X is {X.shape}, Y is {Y.shape}")
    er, ec = dirichlet_energies(X, Lr if cfg.gamma_r else None, Lc if cfg.gamma_c else None)
    return loss_value(Y - X, cfg.loss) + cfg.gamma_c * ec + cfg.gamma_r * er


def grad_g(Z: np.ndarray, Lr, Lc, cfg: FrpcagConfig) -> np.ndarray:
    """Gradient ``2 (gamma_c Z Lc + gamma_r Lr Z)`` of the smooth part."""
    G = np.zeros_like(Z, dtype=np.float64)
    if cfg.gamma_c:
        G += cfg.gamma_c * _right_mul(Z, Lc)
    if cfg.gamma_r:
        G += cfg.gamma_r * (Lr @ Z)
    return 2.0 * G


def prox_l1(Z: np.ndarray, Y: np.ndarray, lam: float) -> np.ndarray:
    """Soft threshold of ``Z`` towards ``Y`` by ``lam`` (prox of ``lam ||Y - .||_1``)."""
    D = Z - Y
    return Y + np.sign(D) * np.maximum(np.abs(D) - lam, 0.0)


def prox_l2(Z: np.ndarray, Y: np.ndarray, lam: float) -> np.ndarray:
    """Prox of ``lam ||Y - .||_F^2``: ``(Z + 2 lam Y) / (1 + 2 lam)``."""
    return (Z + 2.0 * lam * Y) / (1.0 + 2.0 * lam)


def lipschitz_bound(Lr, Lc, cfg: FrpcagConfig) -> float:
    """``beta' = 2 gamma_c ||Lc||_2 + 2 gamma_r ||Lr||_2``."""
    beta = 0.0
    if cfg.gamma_c:
        beta += 2.0 * cfg.gamma_c * power_iteration_norm(Lc, cfg.power_tol, cfg.seed)
    if cfg.gamma_r:
        beta += 2.0 * cfg.gamma_r * power_iteration_norm(Lr, cfg.power_tol, cfg.seed)
    return beta


def fista_solve(Y, Lr, Lc, cfg: FrpcagConfig = FrpcagConfig()) -> tuple[np.ndarray, SolveTrace]:
    """Run FISTA from ``Z_1 = S_0 = Y``, ``t_1 = 1``.

    Stops when ``||Z_{j+1} - Z_j||_F^2 < tol ||Z_j||_F^2`` or after
    ``max_iter`` iterations, and returns the last prox output ``S_j``.

    Raises
    ------
    DivergenceError
        If the objective becomes non-finite.
    """
    Y = np.asarray(Y, dtype=np.float64)
    p, n = Y.shape
    if cfg.gamma_r and (Lr is None or Lr.shape != (p, p)):
        raise DimensionError(f"row Laplacian must be {p}x{p}")
    if cfg.gamma_c and (Lc is None or Lc.shape != (n, n)):
        raise DimensionError(f"column Laplacian must be {n}x{n}")
    beta = lipschitz_bound(Lr, Lc, cfg)
    if cfg.step is not None:
        lam = cfg.step
    else:
        # beta' = 0 (or so small 1/beta' overflows): any step is admissible
        lam = 1.0 / beta if beta > 1.0 / np.finfo(float).max else 1.0
    prox = prox_l1 if cfg.loss == "l1" else prox_l2

    trace = SolveTrace(iterations=0, converged=False, final_rel_change=np.inf,
                       initial_objective=objective(Y, Y, Lr, Lc, cfg), step=lam, beta=beta)
    Z = Y.copy()
    S_prev = Y.copy()
    S = Y.copy()
    t = 1.0
    for j in range(1, cfg.max_iter + 1):
        S = prox(Z - lam * grad_g(Z, Lr, Lc, cfg), Y, lam)
        t_next = (1.0 + np.sqrt(1.0 + 4.0 * t * t)) / 2.0
        Z_next = S + ((t - 1.0) / t_next) * (S - S_prev)
        with np.errstate(over="ignore", invalid="ignore"):
            obj = objective(S, Y, Lr, Lc, cfg)
        if not np.isfinite(obj):
            raise DivergenceError(f"objective became non-finite at iteration {j}; step {lam} too large?")
        trace.objectives.append(obj)
        diff = float(np.sum((Z_next - Z) ** 2))
        zn = float(np.sum(Z * Z))
        trace.iterations = j
        trace.final_rel_change = diff / zn if zn > 0 else (0.0 if diff == 0 else np.inf)
        if diff < cfg.tol * zn or diff == 0.0:
            trace.converged = True
            break
        S_prev, Z, t = S, Z_next, t_next
    return S, trace
