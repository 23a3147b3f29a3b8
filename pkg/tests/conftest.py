"""Shared fixtures and independent oracles."""
import itertools

import numpy as np
import pytest
from scipy.linalg import expm

from ctff import FactoredDistribution, make_random_model, make_running_example


@pytest.fixture
def running():
    return make_running_example()


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


@pytest.fixture
def random3(rng):
    return make_random_model(rng, (2, 3, 2), max_parents=2)


def brute_generator(model):
    """Joint generator built by looping over every state pair.

    Independent of the vectorized amalgamation: a transition is allowed only
    when exactly one variable changes.
    """
    cards = [v.cardinality for v in model.variables]
    states = list(itertools.product(*[range(k) for k in reversed(cards)]))
    states = [tuple(reversed(s)) for s in states]  # variable 0 fastest
    index = {s: i for i, s in enumerate(states)}
    N = len(states)
    Q = np.zeros((N, N))
    for x in states:
        for i in range(model.n):
            c = model.context_index(i, x)
            for y in range(cards[i]):
                if y == x[i]:
                    continue
                z = list(x)
                z[i] = y
                Q[index[x], index[tuple(z)]] += model.cims[i][c, x[i], y]
        Q[index[x], index[x]] = sum(model.cims[i][model.context_index(i, x), x[i], x[i]] for i in range(model.n))
    return Q


def joint_of(fd):
    joint = np.ones(1)
    for m in reversed(fd.marginals):
        joint = np.kron(joint, m)
    return joint


def marginals_of(joint, cards):
    tensor = joint.reshape(tuple(reversed(cards)))
    n = len(cards)
    return [tensor.sum(axis=tuple(a for a in range(n) if a != n - 1 - i)) for i in range(n)]


def expm_propagate(Q, p, t):
    return p @ expm(np.asarray(Q) * t)


def random_factored(rng, cards, floor=0.0):
    ms = []
    for k in cards:
        m = rng.dirichlet(np.ones(k))
        m = floor + (1 - k * floor) * m
        ms.append(m / m.sum())
    return FactoredDistribution(tuple(ms))
