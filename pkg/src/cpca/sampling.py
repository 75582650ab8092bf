"""Uniform row/column sampling plans, sample-size bounds and RIP checks.

Plans are index maps, never 0/1 matrices. Index draws come from a partial
Fisher-Yates shuffle driven by Philox4x64-10 keyed with the plan seed
(counter starting at zero): draw ``i`` swaps position ``i`` with
``i + floor(u * (m - i) / 2**64)`` where ``u`` is the next raw 64-bit
output. Row indices are drawn first, then column indices, from one stream.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .linalg import EigenPairs


def _check_prob(name: str, x: float) -> None:
    if not (0.0 < x < 1.0):
        raise ValueError(f"{name} must lie in (0, 1), got {x}")


def sample_bound(nu: float, k: int, delta: float, epsilon: float, mode: str = "dual") -> float:
    """Raw (pre-ceiling) sample-size bound.

    ``dual``: ``27/delta^2 * nu^2 * log(4k/epsilon)`` (rows and columns
    sampled jointly); ``single``: ``3/delta^2 * nu^2 * log(2k/epsilon)`` (one
    graph, as used by the clustering decoder).
    """
    _check_prob("delta", delta)
    _check_prob("epsilon", epsilon)
    if k < 1:
        raise ValueError("k must be >= 1")
    if nu < math.sqrt(k) - 1e-9:
        raise ValueError(f"coherence nu={nu} is below its lower bound sqrt(k)={math.sqrt(k)}")
    if mode == "dual":
        return 27.0 / delta**2 * nu**2 * math.log(4.0 * k / epsilon)
    if mode == "single":
        return 3.0 / delta**2 * nu**2 * math.log(2.0 * k / epsilon)
    raise ValueError(f"mode must be 'dual' or 'single', got {mode!r}")


def required_samples(nu: float, k: int, delta: float, epsilon: float, mode: str = "dual") -> int:
    """Smallest integer sample count satisfying the bound (not clamped)."""
    return int(math.ceil(sample_bound(nu, k, delta, epsilon, mode)))


def rho_from_factors(p: int, n: int, a: int, b: int) -> tuple[int, int]:
    """Sample sizes for downsampling factors ``a`` (columns) and ``b`` (rows)."""
    if a < 1 or b < 1:
        raise ValueError("downsampling factors must be >= 1")
    return int(math.ceil(p / b)), int(math.ceil(n / a))


@dataclass(frozen=True)
class SamplingPlan:
    omega_r: np.ndarray
    omega_c: np.ndarray
    p: int
    n: int
    delta: float = 0.5
    epsilon: float = 0.1
    seed: int = 0

    def __post_init__(self):
        for name, idx, size in (("omega_r", self.omega_r, self.p), ("omega_c", self.omega_c, self.n)):
            arr = np.asarray(idx, dtype=np.int64)
            if arr.ndim != 1 or arr.size < 1 or arr.size > size:
                raise DimensionError(f"{name} must hold 1..{size} indices")
            if arr.min() < 0 or arr.max() >= size:
                raise DimensionError(f"{name} out of range [0, {size})")
            if np.unique(arr).size != arr.size:
                raise ValueError(f"{name} has repeated indices")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def rho_r(self) -> int:
        return int(self.omega_r.size)

    @property
    def rho_c(self) -> int:
        return int(self.omega_c.size)

    @property
    def norm_const(self) -> float:
        return self.n * self.p / (self.rho_r * self.rho_c)

    @property
    def is_full(self) -> bool:
        return self.rho_r == self.p and self.rho_c == self.n

    def to_dict(self) -> dict:
        return {"seed": self.seed, "p": self.p, "n": self.n,
                "omega_r": self.omega_r.tolist(), "omega_c": self.omega_c.tolist(),
                "delta": self.delta, "epsilon": self.epsilon}

    @classmethod
    def from_dict(cls, d: dict) -> "SamplingPlan":
        return cls(omega_r=np.asarray(d["omega_r"]), omega_c=np.asarray(d["omega_c"]),
                   p=int(d["p"]), n=int(d["n"]), delta=float(d.get("delta", 0.5)),
                   epsilon=float(d.get("epsilon", 0.1)), seed=int(d.get("seed", 0)))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "SamplingPlan":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _partial_fisher_yates(m: int, count: int, raw: np.ndarray) -> np.ndarray:
    perm = list(range(m))
    for i in range(count):
        j = i + ((int(raw[i]) * (m - i)) >> 64)
        perm[i], perm[j] = perm[j], perm[i]
    return np.asarray(perm[:count], dtype=np.int64)


def draw_plan(p: int, n: int, rho_r: int, rho_c: int, delta: float = 0.5,
              epsilon: float = 0.1, seed: int = 0) -> SamplingPlan:
    """Draw ``rho_r`` of ``p`` rows and ``rho_c`` of ``n`` columns uniformly
    without replacement."""
    if not (1 <= rho_r <= p) or not (1 <= rho_c <= n):
        raise DimensionError(f"need 1 <= rho_r <= {p} and 1 <= rho_c <= {n}, got {rho_r}, {rho_c}")
    bitgen = np.random.Philox(key=int(seed))
    raw = bitgen.random_raw(rho_r + rho_c)
    omega_r = _partial_fisher_yates(p, rho_r, raw[:rho_r])
    omega_c = _partial_fisher_yates(n, rho_c, raw[rho_r:])
    return SamplingPlan(omega_r, omega_c, p, n, delta, epsilon, int(seed))


def subsample(Y: np.ndarray, plan: SamplingPlan) -> np.ndarray:
    """``Y[omega_r, omega_c]``, i.e. ``M_r Y M_c``."""
    Y = np.asarray(Y)
    if Y.shape != (plan.p, plan.n):
        raise DimensionError(f"plan is for {plan.p}x{plan.n}, matrix is {Y.shape}")
    return Y[np.ix_(plan.omega_r, plan.omega_c)]


def _basis(B) -> np.ndarray:
    return B.eigenvectors if isinstance(B, EigenPairs) else np.asarray(B, dtype=np.float64)


def rip_constant(basis, omega, n: int | None = None) -> float:
    """Smallest ``delta`` for which ``(1-delta)||w||^2 <= n/rho ||w[omega]||^2
    <= (1+delta)||w||^2`` holds for every ``w`` in the span of ``basis``."""
    B = _basis(basis)
    n = B.shape[0] if n is None else n
    omega = np.asarray(omega, dtype=np.int64)
    Bs = B[omega]
    ev = np.linalg.eigvalsh((n / omega.size) * (Bs.T @ Bs))
    return float(max(1.0 - ev[0], ev[-1] - 1.0))


@dataclass(frozen=True)
class RipReport:
    max_dev: float
    violation_rate: float
    ratios: np.ndarray = field(repr=False)


def rip_check(Pk, Qk, plan: SamplingPlan, trials: int = 200, seed: int = 0,
              delta: float | None = None) -> RipReport:
    """Monte-Carlo check of the two-sided norm preservation.

    Each trial draws ``Y = P G Q'`` with standard normal ``G`` from
    ``Philox(key=seed + trial)`` and records
    ``norm_const * ||Y[omega_r, omega_c]||^2 / ||Y||^2``.
    """
    P, Q = _basis(Pk), _basis(Qk)
    if P.shape[0] != plan.p or Q.shape[0] != plan.n:
        raise DimensionError("bases do not match the plan dimensions")
    delta = plan.delta if delta is None else delta
    Ps, Qs = P[plan.omega_r], Q[plan.omega_c]
    ratios = np.empty(trials)
    for t in range(trials):
        rng = np.random.Generator(np.random.Philox(key=seed + t))
        G = rng.standard_normal((P.shape[1], Q.shape[1]))
        full = np.linalg.norm(P @ G @ Q.T) ** 2
        sub = np.linalg.norm(Ps @ G @ Qs.T) ** 2
        ratios[t] = plan.norm_const * sub / full
    dev = np.abs(ratios - 1.0)
    return RipReport(max_dev=float(dev.max(initial=0.0)),
                     violation_rate=float(np.mean(dev > delta)) if trials else 0.0,
                     ratios=ratios)
