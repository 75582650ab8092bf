"""Closed-form error bounds for the decoders, used to validate them numerically.

All bounds take the RIP constant ``delta`` of the plan actually used (see
:func:`cpca.sampling.rip_constant`) and gap ratios ``lambda_k / lambda_{k+1}``.
The subspace and label bounds measure the error of the in-band part of the
decoded vectors, i.e. after projection onto the first-k eigenvectors.
"""
from __future__ import annotations

import math


def _rip_factor(ambient: float, sampled: float, delta: float) -> float:
    if not (0.0 <= delta < 1.0):
        return math.inf
    return math.sqrt(ambient / (sampled * (1.0 - delta)))


def ideal_bound(n: int, p: int, rho_r: int, rho_c: int, delta: float, noise_norm: float) -> float:
    """``2 sqrt(np / (rho_r rho_c (1 - delta))) ||E||``."""
    return 2.0 * _rip_factor(n * p, rho_r * rho_c, delta) * noise_norm


def alternate_bound(n: int, p: int, rho_r: int, rho_c: int, delta: float, gamma: float,
                    noise_norm: float, gap_ratio_r: float, gap_ratio_c: float,
                    signal_norm: float) -> tuple[float, float]:
    """Bounds on the in-model error and on the out-of-model residual."""
    c = _rip_factor(n * p, rho_r * rho_c, delta)
    g = math.sqrt(gap_ratio_c + gap_ratio_r)
    in_model = c * ((2.0 + 1.0 / math.sqrt(2.0 * gamma)) * noise_norm
                    + (1.0 / math.sqrt(2.0) + math.sqrt(gamma)) * g * signal_norm)
    residual = noise_norm / math.sqrt(2.0 * gamma) + g * signal_norm / math.sqrt(2.0)
    return in_model, residual


def regularized_subspace_bound(p: int, rho: int, delta: float, gammap: float, lambda_k: float,
                               lambda_k1: float, noise_norm: float, signal_norm: float) -> float:
    """Bound for the regularised subspace problem with ``gammap > 0``."""
    c = math.sqrt(2.0) * _rip_factor(p, rho, delta)
    return c * ((2.0 + 1.0 / math.sqrt(gammap * lambda_k1)) * noise_norm
                + (math.sqrt(lambda_k / lambda_k1) + math.sqrt(gammap * lambda_k)) * signal_norm)


def upsampling_bound(p: int, rho: int, delta: float, gap_ratio: float, signal_norm: float) -> float:
    """``sqrt(2p / (rho (1 - delta))) sqrt(gap_ratio) ||U||`` (hard constraints)."""
    return math.sqrt(2.0) * _rip_factor(p, rho, delta) * math.sqrt(gap_ratio) * signal_norm


def label_bound(n: int, rho: int, delta: float, gap_ratio: float, signal_norm: float) -> float:
    """``sqrt(n / (rho (1 - delta))) sqrt(gap_ratio) ||c||`` for one indicator."""
    return _rip_factor(n, rho, delta) * math.sqrt(gap_ratio) * signal_norm
