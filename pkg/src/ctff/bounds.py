"""KL-divergence error bounds for factored uniformization.

All quantities are in nats.  ``gamma`` is the global per-multiplication
contraction, ``gamma_prime = alpha * gamma`` its continuous-time rate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .model import UniformizedModel
from .poisson import poisson_tail

STOCHASTIC_TOL = 1e-9


@dataclass(frozen=True)
class BoundInputs:
    d0: float
    alpha: float
    gamma: float
    epsilon: float
    t: float
    l: int
    delta: float

    def __post_init__(self):
        for name in ("d0", "alpha", "gamma", "epsilon", "t", "l", "delta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.gamma > 1:
            raise ValueError("gamma must be <= 1")

    @property
    def gamma_prime(self) -> float:
        return self.alpha * self.gamma


def mixing_rate(M) -> float:
    """Smallest overlap ``sum_j min(M[a, j], M[b, j])`` over pairs of rows."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("mixing_rate needs a square matrix")
    if np.any(M < -STOCHASTIC_TOL) or np.any(np.abs(M.sum(axis=1) - 1) > STOCHASTIC_TOL):
        raise ValueError("mixing_rate needs a row-stochastic matrix")
    k = M.shape[0]
    if k == 1:
        return 1.0
    best = 1.0
    for a in range(k):
        for b in range(a + 1, k):
            best = min(best, float(np.minimum(M[a], M[b]).sum()))
    return min(1.0, max(0.0, best))


def variable_gamma(umodel: UniformizedModel, i: int) -> float:
    return min(mixing_rate(m) for m in umodel.m_cims[i])


def global_gamma(umodel: UniformizedModel) -> float:
    if umodel.alpha <= 0:
        raise ValueError("alpha = 0: no contraction rate for a frozen process")
    return min(a * variable_gamma(umodel, i) / umodel.alpha for i, a in enumerate(umodel.alpha_i))


def gamma_prime(umodel: UniformizedModel) -> float:
    if umodel.alpha <= 0:
        raise ValueError("alpha = 0: no contraction rate for a frozen process")
    return min(a * variable_gamma(umodel, i) for i, a in enumerate(umodel.alpha_i))


def epsilon_crude(n: int, eta: float) -> float:
    """Projection error bound ``-(n - 1) ln eta``; infinite when ``eta <= 0``."""
    if n <= 1 or eta == 1:
        return 0.0
    if eta <= 0:
        return math.inf
    if eta > 1:
        raise ValueError("eta is a probability")
    return -(n - 1) * math.log(eta)


def single_step_bound(d: float, gamma: float, epsilon: float) -> float:
    return (1.0 - gamma) * d + epsilon


def k_step_bound(d: float, gamma: float, epsilon: float, k: int) -> float:
    """Closed form of ``k`` iterations of :func:`single_step_bound`."""
    c = (1.0 - gamma) ** k
    if gamma == 0:
        return d + k * epsilon
    return c * d + epsilon * (1.0 - c) / gamma


def theorem4_bound(b: BoundInputs) -> float:
    """KL bound after one truncated, factored uniformization interval.

    ``e^{-g a t} d0 + (eps/g)(1 - e^{-g a t}) + R_l (delta + eps/g)``.  For
    ``gamma = 0`` the un-contracted limit ``d0 + l eps + R_l delta`` is used.
    """
    rate = b.alpha * b.t
    tail = poisson_tail(rate, b.l)
    if b.gamma == 0:
        return b.d0 + b.l * b.epsilon + tail * b.delta
    decay = math.exp(-b.gamma * rate)
    ratio = b.epsilon / b.gamma
    # 0 * inf stays 0 when the tail is exactly zero
    tail_term = 0.0 if tail == 0 else tail * (b.delta + ratio)
    return decay * b.d0 + ratio * (1.0 - decay) + tail_term


def asymptotic_bound(d0: float, gamma_p: float, alpha: float, epsilon: float, t: float) -> float:
    """Large-``l`` form ``e^{-g' t} d0 + (alpha eps / g')(1 - e^{-g' t})``."""
    decay = math.exp(-gamma_p * t)
    return decay * d0 + alpha * epsilon / gamma_p * (1.0 - decay)


def propagation_bound(
    umodel: UniformizedModel,
    records: Iterable,
    epsilon: float,
    d0: float = 0.0,
    gamma: float | None = None,
) -> float:
    """Chain the single-interval bound over recorded sub-intervals.

    ``records`` are :class:`~ctff.factored.SubintervalRecord` items.  Each
    sub-interval result is projected back onto products of marginals, which
    adds one more ``epsilon``.
    """
    gamma = global_gamma(umodel) if gamma is None else gamma
    d = d0
    for r in records:
        t_sub = r.rate / umodel.alpha
        d = theorem4_bound(BoundInputs(d, umodel.alpha, gamma, epsilon, t_sub, r.l, r.delta)) + epsilon
    return d
