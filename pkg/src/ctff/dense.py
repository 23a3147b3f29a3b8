"""Exact joint-space filtering used as ground truth for the approximate engines."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import StateSpaceTooLarge, ZeroProbabilityEvidence
from .model import DEFAULT_STATE_CAP, decode_all
from .poisson import choose_truncation, poisson_weights

DEFAULT_TAIL_TOL = 1e-12
DENSE_CUTOFF = 64


@dataclass(frozen=True, eq=False)
class DenseDistribution:
    """Joint probability vector in mixed-radix state order.

    Mass is allowed to drop below one while interval evidence is in force.
    """

    probs: np.ndarray
    cardinalities: tuple[int, ...]

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        cards = tuple(int(k) for k in self.cardinalities)
        if probs.shape != (int(np.prod(cards)),):
            raise ValueError(f"probability vector of length {probs.size} does not match {cards}")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "cardinalities", cards)

    @property
    def mass(self) -> float:
        return float(self.probs.sum())

    def marginal(self, var: int) -> np.ndarray:
        return marginalize(self, var)


def dense_from_factored(fd, cap: int = DEFAULT_STATE_CAP) -> DenseDistribution:
    """Joint distribution of a product of marginals."""
    marginals = [np.asarray(m, dtype=float) for m in fd.marginals]
    cards = tuple(m.size for m in marginals)
    N = int(np.prod(cards))
    if N > cap:
        raise StateSpaceTooLarge(f"joint state space {N} exceeds cap {cap}")
    joint = np.ones(1)
    # np.kron puts its second argument fastest, so fold in reverse order
    for m in reversed(marginals):
        joint = np.kron(joint, m)
    return DenseDistribution(joint, cards)


def _as_array(d) -> np.ndarray:
    return d.probs if isinstance(d, DenseDistribution) else np.asarray(d, dtype=float)


def marginalize(d: DenseDistribution, var: int) -> np.ndarray:
    cards = d.cardinalities
    # state index is Fortran-ordered over variables
    tensor = d.probs.reshape(cards[::-1])
    axis = len(cards) - 1 - var
    other = tuple(a for a in range(len(cards)) if a != axis)
    return tensor.sum(axis=other) if other else tensor.copy()


def all_marginals(d: DenseDistribution) -> list[np.ndarray]:
    return [marginalize(d, i) for i in range(len(d.cardinalities))]


def uniformize_dense(Q) -> tuple[float, sp.csr_matrix]:
    """``Q = alpha (M - I)`` with ``alpha = max_i -Q_ii``."""
    Q = sp.csr_matrix(Q, dtype=float)
    diag = Q.diagonal()
    alpha = float(max(0.0, -diag.min())) if diag.size else 0.0
    if alpha == 0:
        return 0.0, sp.identity(Q.shape[0], format="csr")
    M = Q / alpha + sp.identity(Q.shape[0], format="csr")
    return alpha, M.tocsr()


def propagate_dense(Q, p, t: float, tail_tol: float = DEFAULT_TAIL_TOL):
    """``p exp(Q t)`` by uniformization with a Poisson tail below ``tail_tol``.

    ``Q`` may be dense or scipy-sparse; ``p`` a DenseDistribution or a plain
    vector (the return type follows the input).  Substochastic generators from
    evidence restriction lose mass; the retained mass is the evidence probability.
    """
    if not math.isfinite(t) or t < 0:
        raise ValueError(f"propagation time must be finite and >= 0, got {t}")
    v = _as_array(p)
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite probability entry")
    if sp.issparse(Q):
        Qs = Q.tocsr().astype(float)
        values = Qs.data
    else:
        Qs = np.asarray(Q, dtype=float)
        values = Qs
    if not np.all(np.isfinite(values)):
        raise ValueError("non-finite generator entry")
    N = Qs.shape[0]
    diag = Qs.diagonal()
    alpha = float(max(0.0, -diag.min())) if N else 0.0
    out = v.copy()
    if t > 0 and alpha > 0:
        rate = alpha * t
        l = choose_truncation(rate, tail_tol)
        beta, tail = poisson_weights(rate, l)
        # small chains are faster as dense arrays; sparse setup costs dominate
        if N <= DENSE_CUTOFF:
            Qd = Qs.toarray() if sp.issparse(Qs) else Qs
            MT = (Qd / alpha + np.eye(N)).T
        else:
            MT = (Qs / alpha + sp.identity(N, format="csr")).T.tocsr()
        term = v.copy()
        out = beta[0] * term
        for k in range(1, l + 1):
            term = MT @ term
            out += beta[k] * term
        out /= 1.0 - tail
        np.maximum(out, 0.0, out=out)
    if isinstance(p, DenseDistribution):
        return DenseDistribution(out, p.cardinalities)
    return out


def kl_divergence(p, q, tol: float = 1e-9) -> float:
    """``sum p ln(p/q)`` in nats; ``inf`` when ``p`` has support outside ``q``."""
    p = _as_array(p)
    q = _as_array(q)
    if p.shape != q.shape:
        raise ValueError("distributions differ in shape")
    if abs(p.sum() - 1) > tol or abs(q.sum() - 1) > tol:
        raise ValueError("kl_divergence needs normalized distributions")
    if np.any(p < 0) or np.any(q < 0):
        raise ValueError("negative probability")
    support = p > 0
    if np.any(q[support] == 0):
        return math.inf
    ps, qs = p[support], q[support]
    return max(0.0, float(np.sum(ps * (np.log(ps) - np.log(qs)))))


def normalize(d):
    """Scale to unit mass; returns ``(normalized, ln(old mass))``."""
    v = _as_array(d)
    mass = float(v.sum())
    if not mass > 0:
        raise ZeroProbabilityEvidence("distribution has zero mass: evidence has probability zero")
    out = v / mass
    if isinstance(d, DenseDistribution):
        out = DenseDistribution(out, d.cardinalities)
    return out, math.log(mass)


def condition_dense(d: DenseDistribution, var: int, value: int) -> tuple[DenseDistribution, float]:
    """Zero states inconsistent with ``var = value`` and renormalize."""
    states = decode_all(d.cardinalities)
    probs = np.where(states[:, var] == value, d.probs, 0.0)
    return normalize(DenseDistribution(probs, d.cardinalities))
