"""Sparse uniformization: a thresholded joint vector pushed through the implicit
uniformized matrix one row at a time.

Rows of the uniformized matrix are generated on demand from the CIMs; a state
can only stay put or move one variable, so each row has at most
``1 + sum(k_i - 1)`` entries.
"""
from __future__ import annotations

import itertools
import math
import weakref
from dataclasses import dataclass, field

import numpy as np

from .errors import SparseInconsistencyError, StateSpaceTooLarge
from .factored import FactoredDistribution, PropagationConfig
from .model import DEFAULT_STATE_CAP, UniformizedModel, decode
from .poisson import poisson_weights


@dataclass(eq=False)
class SparseDistribution:
    """Joint-state probabilities keyed by state index.

    ``dropped_mass`` is the probability removed by thresholding.  Propagation
    keeps ``sum(entries) + dropped_mass`` equal to one; mass lost to interval
    evidence is moved into ``log_weight`` instead.
    """

    entries: dict[int, float]
    cardinalities: tuple[int, ...]
    dropped_mass: float = 0.0
    log_weight: float = 0.0

    @property
    def mass(self) -> float:
        return math.fsum(self.entries.values())

    @property
    def support(self) -> int:
        return len(self.entries)

    def copy(self, **changes) -> "SparseDistribution":
        kw = dict(
            entries=dict(self.entries),
            cardinalities=self.cardinalities,
            dropped_mass=self.dropped_mass,
            log_weight=self.log_weight,
        )
        kw.update(changes)
        return SparseDistribution(**kw)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(int(np.prod(self.cardinalities)))
        for x, p in self.entries.items():
            out[x] = p
        return out

    def marginal(self, var: int) -> np.ndarray:
        """Marginal of the retained states, normalized."""
        out = np.zeros(self.cardinalities[var])
        stride = int(np.prod(self.cardinalities[:var]))
        k = self.cardinalities[var]
        for x, p in self.entries.items():
            out[(x // stride) % k] += p
        s = out.sum()
        if not s > 0:
            raise SparseInconsistencyError("sparse distribution retains no states")
        return out / s

    def to_json(self) -> dict:
        return {
            "entries": [[int(x), float(p)] for x, p in sorted(self.entries.items())],
            "dropped_mass": self.dropped_mass,
            "log_weight": self.log_weight,
            "cardinalities": list(self.cardinalities),
        }

    @classmethod
    def from_json(cls, data: dict) -> "SparseDistribution":
        return cls(
            {int(x): float(p) for x, p in data["entries"]},
            tuple(data["cardinalities"]),
            float(data.get("dropped_mass", 0.0)),
            float(data.get("log_weight", 0.0)),
        )


def sparse_from_factored(fd: FactoredDistribution, cap: int = DEFAULT_STATE_CAP) -> SparseDistribution:
    """Enumerate the support of a product of marginals."""
    cards = tuple(m.size for m in fd.marginals)
    supports = [np.flatnonzero(m) for m in fd.marginals]
    size = math.prod(len(s) for s in supports)
    if size > cap:
        raise StateSpaceTooLarge(f"initial support of {size} states exceeds cap {cap}")
    strides = np.concatenate(([1], np.cumprod(cards)[:-1])).astype(np.int64)
    entries = {}
    for combo in itertools.product(*supports):
        p = 1.0
        for m, xi in zip(fd.marginals, combo):
            p *= m[xi]
        entries[int(np.dot(combo, strides))] = p
    return SparseDistribution(entries, cards, 0.0, fd.log_weight)


_ROW_CACHE: "weakref.WeakKeyDictionary[UniformizedModel, dict]" = weakref.WeakKeyDictionary()


def row_successors(umodel: UniformizedModel, x: int) -> list[tuple[int, float]]:
    """Nonzero entries of row ``x`` of the uniformized joint matrix.

    The self-transition collects ``(a_k/a) M_k(x_k, x_k)`` from every variable;
    a move of variable ``j`` alone has probability ``(a_j/a) M_j(x_j, y)``.
    """
    cache = _ROW_CACHE.setdefault(umodel, {})
    row = cache.get(x)
    if row is not None:
        return row
    model = umodel.source
    if umodel.alpha <= 0:
        row = [(x, 1.0)]
    else:
        xs = decode(model.cardinalities, x)
        stay = 0.0
        moves = []
        for i, (w, m) in enumerate(zip(umodel.weights, umodel.m_cims)):
            if w == 0:
                continue
            r = m[model.context_index(i, xs), xs[i]]
            stay += w * r[xs[i]]
            stride = int(model.strides[i])
            for y, p in enumerate(r):
                if y != xs[i] and p > 0:
                    moves.append((x + (y - xs[i]) * stride, w * p))
        row = ([(x, stay)] if stay > 0 else []) + moves
    cache[x] = row
    return row


def sparse_multiply(v: SparseDistribution, umodel: UniformizedModel) -> SparseDistribution:
    out: dict[int, float] = {}
    for x in sorted(v.entries):
        p = v.entries[x]
        for y, q in row_successors(umodel, x):
            out[y] = out.get(y, 0.0) + p * q
    return v.copy(entries=out)


def drop_threshold(v: SparseDistribution, kappa: float) -> SparseDistribution:
    """Remove entries below ``kappa`` (and exact zeros), booking them as dropped."""
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    kept, dropped = {}, []
    for x, p in v.entries.items():
        if p > 0 and p >= kappa:
            kept[x] = p
        else:
            dropped.append(p)
    return v.copy(entries=kept, dropped_mass=v.dropped_mass + math.fsum(dropped))


def sparse_unif_propagate(
    v: SparseDistribution,
    umodel: UniformizedModel,
    t: float,
    cfg: PropagationConfig | None = None,
    kappa: float | None = None,
) -> SparseDistribution:
    """Sparse uniformization over ``[0, t]``.

    Thresholding follows every multiplication; ``kappa`` is relative to the
    retained mass, i.e. it applies to the renormalized distribution.  At the end of each
    sub-interval the series is renormalized by ``1 - R_l``; mass lost to
    interval evidence is moved into ``log_weight`` so that retained plus
    dropped mass stays one.
    """
    cfg = cfg or PropagationConfig()
    kappa = cfg.kappa if kappa is None else kappa
    if t < 0:
        raise ValueError("t must be >= 0")
    rate = umodel.alpha * t
    if rate == 0:
        return v
    m = cfg.n_subintervals(rate)
    l = cfg.truncation(rate / m)
    beta, _ = poisson_weights(rate / m, l)
    norm = beta.sum()
    for _ in range(m):
        start = v.mass
        if not start > 0:
            raise SparseInconsistencyError("sparse distribution retains no states")
        acc = {x: beta[0] * p for x, p in v.entries.items()}
        cur = v.copy(dropped_mass=0.0)
        dropped = 0.0
        for k in range(1, l + 1):
            cur = drop_threshold(sparse_multiply(cur, umodel), kappa * start)
            for x, p in cur.entries.items():
                acc[x] = acc.get(x, 0.0) + beta[k] * p
            dropped += beta[k] * cur.dropped_mass
        retained = math.fsum(acc.values())
        ratio = (retained + dropped) / norm / start
        if not ratio > 0:
            raise SparseInconsistencyError("all retained states became inconsistent with the evidence")
        scale = 1.0 / (norm * ratio)
        v = SparseDistribution(
            {x: p * scale for x, p in acc.items()},
            v.cardinalities,
            v.dropped_mass + dropped * scale,
            v.log_weight + math.log(ratio),
        )
    return v


def condition_sparse(v: SparseDistribution, var: int, value: int) -> SparseDistribution:
    """Keep the states with ``var = value`` and rescale them to the retained mass.

    Raises
    ------
    SparseInconsistencyError
        If no retained state agrees with the evidence, even though the true
        distribution may give it positive probability.
    """
    stride = int(np.prod(v.cardinalities[:var]))
    k = v.cardinalities[var]
    kept = {x: p for x, p in v.entries.items() if (x // stride) % k == value}
    total = v.mass
    consistent = math.fsum(kept.values())
    if not consistent > 0:
        raise SparseInconsistencyError(
            f"no retained state has variable {var} = {value}; "
            f"{v.support} states retained, {v.dropped_mass:.3g} mass dropped"
        )
    ratio = consistent / total
    return v.copy(
        entries={x: p / ratio for x, p in kept.items()},
        log_weight=v.log_weight + math.log(ratio),
    )
