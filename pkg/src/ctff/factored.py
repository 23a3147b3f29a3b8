"""Propagation of product-of-marginals belief states.

Two engines share the projected products below:

* factored uniformization: the Poisson-weighted series of projected
  multiplications by the uniformized matrix, re-projected to a product of
  marginals at the end of each sub-interval;
* factored RKF: adaptive Runge-Kutta-Fehlberg integration of the master
  equation projected onto the marginals.

The projected product never forms a joint vector.  Each variable's new marginal
depends only on its old marginal and the product of its parents' marginals,
because the uniformized chain moves exactly one variable per step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ModelValidationError, StiffnessError, ZeroProbabilityEvidence
from .model import CtbnModel, UniformizedModel
from .poisson import choose_truncation, poisson_weights

NORM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class FactoredDistribution:
    """One normalized marginal per variable plus accumulated log evidence."""

    marginals: tuple[np.ndarray, ...]
    log_weight: float = 0.0

    def __post_init__(self):
        ms = []
        for m in self.marginals:
            arr = np.array(m, dtype=float)
            arr.setflags(write=False)
            ms.append(arr)
        object.__setattr__(self, "marginals", tuple(ms))
        object.__setattr__(self, "log_weight", float(self.log_weight))

    @property
    def n(self) -> int:
        return len(self.marginals)

    def check(self, tol: float = NORM_TOL) -> "FactoredDistribution":
        for i, m in enumerate(self.marginals):
            if np.any(m < 0) or abs(m.sum() - 1) > tol:
                raise ModelValidationError(f"marginal {i} is not a normalized distribution: {m}")
        return self

    def to_dict(self) -> dict:
        return {"marginals": [m.tolist() for m in self.marginals], "log_weight": self.log_weight}

    @classmethod
    def from_dict(cls, data: dict) -> "FactoredDistribution":
        return cls(tuple(data["marginals"]), data.get("log_weight", 0.0)).check()

    @classmethod
    def deterministic(cls, model: CtbnModel, states: Sequence[int]) -> "FactoredDistribution":
        ms = []
        for var, s in zip(model.variables, states):
            m = np.zeros(var.cardinality)
            m[s] = 1.0
            ms.append(m)
        return cls(tuple(ms))

    @classmethod
    def uniform(cls, model: CtbnModel) -> "FactoredDistribution":
        return cls(tuple(np.full(k, 1.0 / k) for k in model.cardinalities))


@dataclass
class PropagationConfig:
    """Tuning knobs shared by the propagation engines.

    ``theta`` is the Poisson budget per sub-interval: a horizon ``t`` is split
    into ``max(1, ceil(alpha t / theta))`` equal pieces.  ``l`` is either a
    fixed series length or ``"auto"``, in which case the smallest length with
    tail below ``tail_tol`` is used.
    """

    theta: float = 2.0
    l: int | str = "auto"
    tail_tol: float = 1e-10
    rkf_tol: float = 1e-6
    kappa: float = 0.0

    def __post_init__(self):
        if not self.theta > 0:
            raise ModelValidationError("theta must be positive")
        if self.l != "auto" and (not isinstance(self.l, (int, np.integer)) or self.l < 1):
            raise ModelValidationError("l must be a positive integer or 'auto'")
        for name in ("tail_tol", "rkf_tol"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ModelValidationError(f"{name} must lie in (0, 1)")
        if self.kappa < 0:
            raise ModelValidationError("kappa must be >= 0")

    def truncation(self, rate: float) -> int:
        return choose_truncation(rate, self.tail_tol) if self.l == "auto" else int(self.l)

    def n_subintervals(self, rate: float) -> int:
        return max(1, math.ceil(rate / self.theta))


@dataclass(frozen=True)
class SubintervalRecord:
    """Diagnostics of one factored-uniformization sub-interval."""

    rate: float
    l: int
    tail: float
    delta: float


def parent_marginal(fd: FactoredDistribution, parents: Sequence[int], u: Sequence[int]) -> float:
    """Probability of parent assignment ``u`` under the product of marginals."""
    p = 1.0
    for j, uj in zip(parents, u):
        p *= float(fd.marginals[j][uj])
    return p


def context_weights(fd: FactoredDistribution, parents: Sequence[int]) -> np.ndarray:
    """Probabilities of every parent context, in context-index order."""
    w = np.ones(1)
    for j in reversed(parents):
        w = np.kron(w, fd.marginals[j])
    return w


def _renormalize(marginals: list[np.ndarray], log_weight: float) -> tuple[list[np.ndarray], float]:
    out = []
    for m in marginals:
        np.maximum(m, 0.0, out=m)
        s = m.sum()
        if not s > 0:
            raise ZeroProbabilityEvidence("a marginal lost all its mass under interval evidence")
        out.append(m / s)
        log_weight += math.log(s)
    return out, log_weight


def projected_multiply_M(fd: FactoredDistribution, umodel: UniformizedModel) -> FactoredDistribution:
    """One multiplication by the uniformized matrix, projected to marginals.

    All variables read the same (old) parent marginals.  Results are
    renormalized; under interval evidence the lost log mass is added to
    ``log_weight``.
    """
    if umodel.alpha <= 0:
        return fd
    model = umodel.source
    new = []
    for j, tilde in enumerate(umodel.tilde_cims):
        w = context_weights(fd, model.parents[j])
        new.append(fd.marginals[j] @ np.tensordot(w, tilde, axes=1))
    # mass errors compound through the parent weights, so renormalize always
    new, lost = _renormalize(new, 0.0)
    log_weight = fd.log_weight + lost if model.is_restricted else fd.log_weight
    return FactoredDistribution(tuple(new), log_weight)


def projected_rate_apply(fd: FactoredDistribution, model: CtbnModel) -> list[np.ndarray]:
    """Time derivative of every marginal under the projected master equation."""
    out = []
    for j, cim in enumerate(model.cims):
        w = context_weights(fd, model.parents[j])
        out.append(fd.marginals[j] @ np.tensordot(w, cim, axes=1))
    return out


def _delta(fd: FactoredDistribution) -> float:
    """Largest negative log joint probability of a product distribution."""
    with np.errstate(divide="ignore"):
        return float(-sum(np.log(m.min()) for m in fd.marginals))


def factored_unif_step(
    fd: FactoredDistribution, umodel: UniformizedModel, t_sub: float, l: int
) -> FactoredDistribution:
    """Truncated Poisson series of projected products over one sub-interval.

    The mixture of product distributions is projected back by mixing the
    marginals, which is the KL-optimal product approximation of the mixture.
    Under evidence every series term is weighted by the mass it retained.
    """
    rate = umodel.alpha * t_sub
    if rate == 0:
        return fd
    beta, _ = poisson_weights(rate, l)
    cur = FactoredDistribution(fd.marginals, 0.0)
    acc = [beta[0] * m for m in cur.marginals]
    total = beta[0]
    for k in range(1, l + 1):
        cur = projected_multiply_M(cur, umodel)
        wk = beta[k] * math.exp(cur.log_weight)
        for a, m in zip(acc, cur.marginals):
            a += wk * m
        total += wk
    # total == 1 - R_l without evidence; the ratio is the retained mass
    log_mass = math.log(total / beta.sum())
    marginals = [a / total for a in acc]
    return FactoredDistribution(tuple(marginals), fd.log_weight + log_mass)


def factored_unif_propagate(
    fd: FactoredDistribution,
    umodel: UniformizedModel,
    t: float,
    cfg: PropagationConfig | None = None,
    trace: list | None = None,
) -> FactoredDistribution:
    """Factored uniformization over ``[0, t]`` in ``ceil(alpha t / theta)`` pieces.

    If ``trace`` is a list, one :class:`SubintervalRecord` per piece is appended.
    """
    cfg = cfg or PropagationConfig()
    if t < 0:
        raise ValueError("t must be >= 0")
    rate = umodel.alpha * t
    if rate == 0:
        return fd
    m = cfg.n_subintervals(rate)
    t_sub = t / m
    l = cfg.truncation(rate / m)
    tail = poisson_weights(rate / m, l)[1] if trace is not None else None
    for _ in range(m):
        fd = factored_unif_step(fd, umodel, t_sub, l)
        if trace is not None:
            trace.append(SubintervalRecord(rate / m, l, tail, _delta(fd)))
    return fd


# Fehlberg 4(5) tableau
_RKF_C = np.array([0.0, 1 / 4, 3 / 8, 12 / 13, 1.0, 1 / 2])
_RKF_A = [
    [],
    [1 / 4],
    [3 / 32, 9 / 32],
    [1932 / 2197, -7200 / 2197, 7296 / 2197],
    [439 / 216, -8.0, 3680 / 513, -845 / 4104],
    [-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40],
]
_RKF_B4 = np.array([25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0])
_RKF_B5 = np.array([16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55])
_RKF_ERR = _RKF_B5 - _RKF_B4


def factored_rkf_propagate(
    fd: FactoredDistribution,
    model: CtbnModel,
    t: float,
    cfg: PropagationConfig | None = None,
    stats: dict | None = None,
) -> FactoredDistribution:
    """Adaptive RKF 4(5) integration of the projected master equation.

    The local error estimate is the max-norm over all marginal entries; the
    fourth-order solution is propagated.  Accepted steps are clamped at zero
    and renormalized, with any mass lost to evidence folded into ``log_weight``.
    """
    cfg = cfg or PropagationConfig()
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        return fd
    sizes = [m.size for m in fd.marginals]
    splits = np.cumsum(sizes)[:-1]
    max_rate = sum(float(-np.min(np.diagonal(c, axis1=1, axis2=2))) for c in model.cims)
    if max_rate <= 0:
        return fd
    tol = cfg.rkf_tol

    def deriv(y):
        parts = np.split(y, splits)
        return np.concatenate(projected_rate_apply(FactoredDistribution(tuple(parts)), model))

    y = np.concatenate(fd.marginals)
    log_weight = fd.log_weight
    s, h = 0.0, min(t, 0.1 / max_rate)
    h_min = 1e-12 * t
    accepted = rejected = 0
    k = np.empty((6, y.size))
    while s < t:
        h = min(h, t - s)
        k[0] = deriv(y)
        for i in range(1, 6):
            k[i] = deriv(y + h * (np.asarray(_RKF_A[i]) @ k[:i]))
        err = h * float(np.max(np.abs(_RKF_ERR @ k)))
        if err <= tol:
            y_new = y + h * (_RKF_B4 @ k)
            parts, lw = _renormalize(np.split(y_new, splits), 0.0)
            if model.is_restricted:
                log_weight += lw
            y = np.concatenate(parts)
            s += h
            accepted += 1
        else:
            rejected += 1
        factor = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * (tol / err) ** 0.2))
        h *= factor
        if h < h_min and s < t:
            raise StiffnessError(f"RKF step size fell below {h_min:g} at s = {s:g}")
    if stats is not None:
        stats.update(accepted=accepted, rejected=rejected)
    return FactoredDistribution(tuple(np.split(y, splits)), log_weight)


def condition_point(fd: FactoredDistribution, var: int, value: int) -> FactoredDistribution:
    """Observe ``var = value``: that marginal becomes one-hot."""
    p = float(fd.marginals[var][value])
    if not p > 0:
        raise ZeroProbabilityEvidence(f"evidence var {var} = {value} has probability zero")
    ms = list(fd.marginals)
    onehot = np.zeros_like(ms[var])
    onehot[value] = 1.0
    ms[var] = onehot
    return FactoredDistribution(tuple(ms), fd.log_weight + math.log(p))
