"""Model and initial-distribution generators for tests and experiments."""
from __future__ import annotations

import math

import numpy as np

from .factored import FactoredDistribution
from .model import CtbnModel, Variable, validate_model


def make_running_example() -> CtbnModel:
    """Two binary variables, A -> B, whose joint generator is the 4-state example."""
    q_a = [[[-1.0, 1.0], [2.0, -2.0]]]
    q_b = [
        [[-3.0, 3.0], [4.0, -4.0]],  # a0
        [[-5.0, 5.0], [6.0, -6.0]],  # a1
    ]
    return validate_model(CtbnModel((Variable("A", 2), Variable("B", 2)), ((), (0,)), (q_a, q_b)))


def glauber_flip_rate(spin: int, parent_spins, tau: float, beta: float) -> float:
    """Rate at which a +/-1 spin flips given its parents' spins.

    ``tau / (1 + exp(2 beta s sum(parents)))``: agreeing with the parents
    suppresses flips, disagreeing promotes them.
    """
    return tau / (1.0 + math.exp(2.0 * beta * spin * sum(parent_spins)))


def metropolis_flip_rate(spin: int, parent_spins, tau: float, beta: float) -> float:
    """Metropolis rate ``tau * min(1, exp(-2 beta s sum(parents)))``."""
    return tau * min(1.0, math.exp(-2.0 * beta * spin * sum(parent_spins)))


FLIP_RATES = {"glauber": glauber_flip_rate, "metropolis": metropolis_flip_rate}


def _ising_cims(parents, tau: float, beta: float, dynamics: str) -> list[np.ndarray]:
    rate = FLIP_RATES[dynamics]
    cims = []
    for ps in parents:
        stack = np.zeros((2 ** len(ps), 2, 2))
        for c in range(stack.shape[0]):
            spins = [2 * ((c >> b) & 1) - 1 for b in range(len(ps))]
            for x in (0, 1):
                r = rate(2 * x - 1, spins, tau, beta)
                stack[c, x, 1 - x] = r
                stack[c, x, x] = -r
        cims.append(stack)
    return cims


def make_ring_ising(n: int, tau: float = 4.0, beta: float = 1.0, dynamics: str = "metropolis") -> CtbnModel:
    """Bidirectional ring: node ``i`` has parents ``i-1`` and ``i+1``.

    ``dynamics`` picks the flip-rate law (see :data:`FLIP_RATES`).  With
    Glauber rates and two parents the product-of-marginals dynamics happen to
    be exact, so Metropolis is the default for accuracy experiments.
    """
    if n < 3:
        raise ValueError("a ring needs at least 3 nodes")
    parents = [((i - 1) % n, (i + 1) % n) for i in range(n)]
    variables = tuple(Variable(f"x{i}", 2) for i in range(n))
    return validate_model(CtbnModel(variables, tuple(parents), tuple(_ising_cims(parents, tau, beta, dynamics))))


def make_toroid_ising(
    rows: int, cols: int, tau: float = 4.0, beta: float = 1.0, dynamics: str = "metropolis"
) -> CtbnModel:
    """Directed torus: node ``(r, c)`` has parents west ``(r, c-1)`` and north ``(r-1, c)``.

    Nodes are numbered row-major, ``r * cols + c``.
    """
    if rows < 2 or cols < 2:
        raise ValueError("a toroid needs at least 2 rows and 2 columns")
    parents = []
    for r in range(rows):
        for c in range(cols):
            west = r * cols + (c - 1) % cols
            north = ((r - 1) % rows) * cols + c
            parents.append((west, north))
    variables = tuple(Variable(f"x{i}", 2) for i in range(rows * cols))
    return validate_model(CtbnModel(variables, tuple(parents), tuple(_ising_cims(parents, tau, beta, dynamics))))


def random_cim(rng: np.random.Generator, k: int, scale: float = 1.0) -> np.ndarray:
    off = rng.exponential(scale, size=(k, k))
    np.fill_diagonal(off, 0.0)
    np.fill_diagonal(off, -off.sum(axis=1))
    return off


def make_random_model(
    rng: np.random.Generator,
    cardinalities=(2, 3, 2),
    max_parents: int = 2,
    scale: float = 1.0,
) -> CtbnModel:
    """Random CTBN over the given cardinalities; parent sets may be cyclic."""
    n = len(cardinalities)
    variables = tuple(Variable(f"v{i}", int(k)) for i, k in enumerate(cardinalities))
    parents, cims = [], []
    for i in range(n):
        others = [j for j in range(n) if j != i]
        size = int(rng.integers(0, min(max_parents, len(others)) + 1))
        ps = tuple(sorted(rng.choice(others, size=size, replace=False).tolist())) if size else ()
        n_ctx = int(np.prod([cardinalities[p] for p in ps], dtype=np.int64))
        parents.append(ps)
        cims.append(np.stack([random_cim(rng, cardinalities[i], scale) for _ in range(n_ctx)]))
    return validate_model(CtbnModel(variables, tuple(parents), tuple(cims)))


def make_disconnected(rng: np.random.Generator, cardinalities=(2, 3, 2), scale: float = 1.0) -> CtbnModel:
    """Independent variables: the joint generator is a Kronecker sum."""
    variables = tuple(Variable(f"v{i}", int(k)) for i, k in enumerate(cardinalities))
    cims = tuple(random_cim(rng, int(k), scale)[None] for k in cardinalities)
    return validate_model(CtbnModel(variables, tuple(() for _ in cardinalities), cims))


def quarter_split_states(n: int, reverse: bool = False) -> list[int]:
    """First quarter of the nodes in state 0, the rest in state 1 (or the reverse)."""
    head = max(1, round(n / 4))
    states = [0] * head + [1] * (n - head)
    return [1 - s for s in states] if reverse else states


def floored_initial(
    model: CtbnModel, rng: np.random.Generator | None = None, eta: float = 0.05
) -> FactoredDistribution:
    """Random marginals with every entry at least ``eta``."""
    rng = rng or np.random.default_rng(0)
    ms = []
    for k in model.cardinalities:
        if k * eta > 1:
            raise ValueError(f"eta = {eta} is infeasible for a {k}-state variable")
        m = eta + (1 - k * eta) * rng.dirichlet(np.ones(k))
        ms.append(m / m.sum())
    return FactoredDistribution(tuple(ms))


def generate(kind: str, **params) -> CtbnModel:
    """Dispatch used by the CLI and experiment files."""
    if kind == "running-example":
        return make_running_example()
    if kind == "ring":
        return make_ring_ising(
            int(params.get("n", 8)), params.get("tau", 4.0), params.get("beta", 1.0), params.get("dynamics", "metropolis")
        )
    if kind == "toroid":
        return make_toroid_ising(
            int(params.get("rows", 3)),
            int(params.get("cols", 3)),
            params.get("tau", 4.0),
            params.get("beta", 1.0),
            params.get("dynamics", "metropolis"),
        )
    raise ValueError(f"unknown generator {kind!r}")
