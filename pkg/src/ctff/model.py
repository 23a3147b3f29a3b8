"""CTBN models: validation, joint-state encoding, amalgamation and uniformization.

Joint states use a mixed-radix index with variable 0 least significant, so for
two binary variables A, B the order is a0b0, a1b0, a0b1, a1b1.  Parent contexts
of a variable follow the same convention over its parent list.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ModelValidationError, StateSpaceTooLarge

ROW_SUM_TOL = 1e-9
DEFAULT_STATE_CAP = 2**22


@dataclass(frozen=True)
class Variable:
    name: str
    cardinality: int


@dataclass(frozen=True, eq=False)
class CtbnModel:
    """A continuous-time Bayesian network.

    Parameters
    ----------
    variables : sequence of Variable
    parents : sequence of sequences of int
        ``parents[i]`` is the ordered parent list of variable ``i``.
    cims : sequence of arrays
        ``cims[i]`` has shape ``(n_contexts_i, k_i, k_i)``; context ``c`` is the
        mixed-radix index of the parent assignment (first parent fastest).
    evidence : tuple of (var, value) pairs
        Non-empty for models restricted by interval evidence.  Rows of those
        variables' CIMs are allowed to sum below zero.
    """

    variables: tuple[Variable, ...]
    parents: tuple[tuple[int, ...], ...]
    cims: tuple[np.ndarray, ...]
    evidence: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        variables = tuple(v if isinstance(v, Variable) else Variable(*v) for v in self.variables)
        parents = tuple(tuple(int(p) for p in ps) for ps in self.parents)
        cims = []
        for c in self.cims:
            arr = np.array(c, dtype=float)
            if arr.ndim == 2:
                arr = arr[None]
            arr.setflags(write=False)
            cims.append(arr)
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "cims", tuple(cims))
        object.__setattr__(self, "evidence", tuple((int(v), int(s)) for v, s in self.evidence))

    @property
    def n(self) -> int:
        return len(self.variables)

    @cached_property
    def cardinalities(self) -> np.ndarray:
        return np.array([v.cardinality for v in self.variables], dtype=np.int64)

    @cached_property
    def strides(self) -> np.ndarray:
        """Place value of each variable in the joint index."""
        return np.concatenate(([1], np.cumprod(self.cardinalities)[:-1])).astype(np.int64)

    @property
    def n_states(self) -> int:
        return int(np.prod(self.cardinalities, dtype=object))

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    def index_of(self, name) -> int:
        if isinstance(name, (int, np.integer)):
            if not 0 <= name < self.n:
                raise ModelValidationError(f"variable index {name} out of range")
            return int(name)
        try:
            return self.names.index(name)
        except ValueError:
            raise ModelValidationError(f"unknown variable {name!r}") from None

    def n_contexts(self, i: int) -> int:
        return int(np.prod([self.variables[p].cardinality for p in self.parents[i]], dtype=np.int64))

    def context_index(self, i: int, x: Sequence[int]) -> int:
        """Parent-context index of variable ``i`` in joint assignment ``x``."""
        c, radix = 0, 1
        for p in self.parents[i]:
            c += int(x[p]) * radix
            radix *= self.variables[p].cardinality
        return c

    def context_index_from_parents(self, i: int, u: Sequence[int]) -> int:
        if len(u) != len(self.parents[i]):
            raise ValueError(f"variable {i} has {len(self.parents[i])} parents, got assignment {u}")
        return encode([self.variables[p].cardinality for p in self.parents[i]], u)

    def context_assignment(self, i: int, c: int) -> tuple[int, ...]:
        """Inverse of :meth:`context_index`: parent values for context ``c``."""
        out = []
        for p in self.parents[i]:
            k = self.variables[p].cardinality
            out.append(c % k)
            c //= k
        return tuple(out)

    @property
    def is_restricted(self) -> bool:
        return bool(self.evidence)


def encode(cardinalities: Sequence[int], x: Sequence[int]) -> int:
    index, radix = 0, 1
    for xi, k in zip(x, cardinalities):
        index += int(xi) * radix
        radix *= int(k)
    return index


def decode(cardinalities: Sequence[int], index: int) -> tuple[int, ...]:
    out = []
    for k in cardinalities:
        out.append(index % int(k))
        index //= int(k)
    return tuple(out)


def decode_all(cardinalities: Sequence[int]) -> np.ndarray:
    """All joint assignments as an ``(N, n)`` array in index order."""
    cards = np.asarray(cardinalities, dtype=np.int64)
    idx = np.arange(int(np.prod(cards)), dtype=np.int64)
    out = np.empty((idx.size, cards.size), dtype=np.int64)
    for i, k in enumerate(cards):
        out[:, i] = idx % k
        idx = idx // k
    return out


def _context_indices(model: CtbnModel, i: int, states: np.ndarray) -> np.ndarray:
    ctx = np.zeros(states.shape[0], dtype=np.int64)
    radix = 1
    for p in model.parents[i]:
        ctx += states[:, p] * radix
        radix *= model.variables[p].cardinality
    return ctx


def validate_model(model: CtbnModel) -> CtbnModel:
    """Return ``model`` unchanged if every structural invariant holds.

    Raises
    ------
    ModelValidationError
        Naming the first violated invariant with variable, context and row.
    """
    n = model.n
    if len(model.parents) != n or len(model.cims) != n:
        raise ModelValidationError("parents and cims must have one entry per variable")
    names = model.names
    if len(set(names)) != n:
        raise ModelValidationError("duplicate variable names")
    restricted = {v for v, _ in model.evidence}
    for i, var in enumerate(model.variables):
        if var.cardinality < 1:
            raise ModelValidationError(f"variable {i}: cardinality must be >= 1")
        ps = model.parents[i]
        if i in ps:
            raise ModelValidationError(f"variable {i} ({var.name}): self-parent")
        if len(set(ps)) != len(ps):
            raise ModelValidationError(f"variable {i} ({var.name}): duplicate parent")
        for p in ps:
            if not 0 <= p < n:
                raise ModelValidationError(f"variable {i} ({var.name}): invalid parent index {p}")
        cim = model.cims[i]
        k = var.cardinality
        if cim.shape != (model.n_contexts(i), k, k):
            raise ModelValidationError(
                f"variable {i} ({var.name}): expected CIM stack of shape "
                f"{(model.n_contexts(i), k, k)}, got {cim.shape}"
            )
        if not np.all(np.isfinite(cim)):
            raise ModelValidationError(f"variable {i} ({var.name}): non-finite CIM entry")
        for c in range(cim.shape[0]):
            off = cim[c] - np.diag(np.diag(cim[c]))
            for r in range(k):
                if np.any(off[r] < 0):
                    raise ModelValidationError(
                        f"variable {i} ({var.name}), context {c}, row {r}: negative off-diagonal rate"
                    )
                s = cim[c, r].sum()
                if i in restricted:
                    if s > ROW_SUM_TOL:
                        raise ModelValidationError(
                            f"variable {i} ({var.name}), context {c}, row {r}: row sum {s:g} > 0"
                        )
                elif abs(s) > ROW_SUM_TOL:
                    raise ModelValidationError(
                        f"variable {i} ({var.name}), context {c}, row {r}: row sum nonzero ({s:g})"
                    )
    for v, s in model.evidence:
        if not 0 <= v < n or not 0 <= s < model.variables[v].cardinality:
            raise ModelValidationError(f"evidence ({v}, {s}) out of range")
    return model


def amalgamate(model: CtbnModel, cap: int = DEFAULT_STATE_CAP) -> sp.csr_matrix:
    """Expand the CTBN into its generator over the full joint space.

    The result is stored sparse; it has nonzeros only on the diagonal and at
    pairs of states that differ in exactly one variable.
    """
    N = model.n_states
    if N > cap:
        raise StateSpaceTooLarge(f"joint state space {N} exceeds cap {cap}")
    states = decode_all(model.cardinalities)
    idx = np.arange(N, dtype=np.int64)
    diag = np.zeros(N)
    rows, cols, vals = [], [], []
    for i in range(model.n):
        k = model.variables[i].cardinality
        ctx = _context_indices(model, i, states)
        xi = states[:, i]
        cim = model.cims[i]
        diag += cim[ctx, xi, xi]
        stride = model.strides[i]
        for y in range(k):
            mask = xi != y
            rate = cim[ctx[mask], xi[mask], y]
            nz = rate != 0
            src = idx[mask][nz]
            rows.append(src)
            cols.append(src + (y - xi[mask][nz]) * stride)
            vals.append(rate[nz])
    rows.append(idx)
    cols.append(idx)
    vals.append(diag)
    Q = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
    )
    return Q.tocsr()


@dataclass(frozen=True, eq=False)
class UniformizedModel:
    """Per-variable uniformization of a CTBN.

    ``m_cims[i][c] = cims[i][c] / alpha_i[i] + I`` (identity when the variable
    is frozen, ``alpha_i[i] == 0``).  The global rate is ``alpha = sum(alpha_i)``.
    """

    alpha_i: np.ndarray
    alpha: float
    m_cims: tuple[np.ndarray, ...]
    source: CtbnModel = field(repr=False)

    @cached_property
    def tilde_cims(self) -> tuple[np.ndarray, ...]:
        """Stacks of ``(a_i/a) M_i + (1 - a_i/a) I`` for every variable and context."""
        if self.alpha <= 0:
            raise ValueError("alpha = 0: the process is frozen, propagation is the identity")
        out = []
        for a_i, m in zip(self.alpha_i, self.m_cims):
            w = a_i / self.alpha
            t = w * m + (1.0 - w) * np.eye(m.shape[-1])
            t.setflags(write=False)
            out.append(t)
        return tuple(out)

    @property
    def weights(self) -> np.ndarray:
        """Mixture weights ``alpha_i / alpha``."""
        if self.alpha <= 0:
            return np.zeros_like(self.alpha_i)
        return self.alpha_i / self.alpha


def uniformize(model: CtbnModel) -> UniformizedModel:
    alpha_i = np.array([max(0.0, -float(np.min(np.diagonal(c, axis1=1, axis2=2)))) for c in model.cims])
    m_cims = []
    for a, cim in zip(alpha_i, model.cims):
        eye = np.eye(cim.shape[-1])
        m = np.broadcast_to(eye, cim.shape).copy() if a == 0 else cim / a + eye
        m.setflags(write=False)
        m_cims.append(m)
    alpha_i.setflags(write=False)
    return UniformizedModel(alpha_i, float(alpha_i.sum()), tuple(m_cims), model)


def tilde_matrix(umodel: UniformizedModel, i: int, u) -> np.ndarray:
    """Mixture-component matrix of variable ``i`` under parent assignment ``u``.

    ``u`` is either a context index or a tuple of parent values.
    """
    if umodel.alpha <= 0:
        raise ValueError("alpha = 0: the process is frozen, propagation is the identity")
    c = u if isinstance(u, (int, np.integer)) else umodel.source.context_index_from_parents(i, u)
    return umodel.tilde_cims[i][c]


def restrict_for_interval_evidence(model: CtbnModel, var, value: int) -> CtbnModel:
    """Model for monitoring while ``var`` is held at ``value``.

    In every CIM of ``var`` the observed row keeps only its diagonal and all
    other rows are zeroed, so probability mass leaving the observed value is
    lost rather than redistributed.
    """
    i = model.index_of(var)
    k = model.variables[i].cardinality
    if not 0 <= value < k:
        raise ModelValidationError(f"evidence value {value} out of range for {model.variables[i].name}")
    cims = list(model.cims)
    new = np.zeros_like(cims[i])
    new[:, value, value] = cims[i][:, value, value]
    cims[i] = new
    return CtbnModel(model.variables, model.parents, tuple(cims), model.evidence + ((i, value),))


# -- JSON model files -------------------------------------------------------


def model_to_dict(model: CtbnModel) -> dict:
    return {
        "variables": [{"name": v.name, "cardinality": v.cardinality} for v in model.variables],
        "parents": [[model.variables[p].name for p in ps] for ps in model.parents],
        "cims": [c.tolist() for c in model.cims],
    }


def model_from_dict(data: dict) -> CtbnModel:
    try:
        variables = [Variable(str(v["name"]), int(v["cardinality"])) for v in data["variables"]]
        names = [v.name for v in variables]
        parents = []
        for ps in data["parents"]:
            parents.append([p if isinstance(p, int) else names.index(p) for p in ps])
        cims = []
        for i, c in enumerate(data["cims"]):
            arr = np.array(c, dtype=float)
            k = variables[i].cardinality
            cims.append(arr.reshape(-1, k, k))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelValidationError(f"malformed model file: {exc}") from exc
    return validate_model(CtbnModel(tuple(variables), tuple(map(tuple, parents)), tuple(cims)))


def load_model(path) -> CtbnModel:
    return model_from_dict(json.loads(Path(path).read_text()))


def save_model(model: CtbnModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n")
