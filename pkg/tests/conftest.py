"""
Shared fixtures: the shipped reference instances, a random-instance
generator and a brute-force LP oracle that enumerates basic solutions.
"""

import itertools

import numpy as np
import pytest

from config.system_profile import load_params
from model.params import make_params, validate
from solvers.regions import max_stable_rate


@pytest.fixture
def two_su():
    """Two SUs, budget 0.5 each, λ_p = 0.3 (λ̂ = 0.8)."""
    return load_params('two_su')


@pytest.fixture
def five_su():
    """Five SUs, budget 0.15 each, λ_p = 0.3 (λ̂ = 0.7)."""
    return load_params('five_su')


@pytest.fixture
def single_su():
    """One SU with the five-level tables of the reference instances."""
    return make_params([[0.0, 0.25, 0.5, 0.75, 1.0]], [[0.0, 0.3, 0.5, 0.8, 1.0]],
                       [[0.4, 0.5, 0.6, 0.7, 0.8]], 0.4, 0.5, 0.3, name='single')


def random_params(rng: np.random.Generator, num_sus: int = None, max_levels: int = 4,
                  load: float = None, budget_scale: float = None):
    """A valid random instance; ``load`` is λ_p as a fraction of λ̂."""
    num_sus = num_sus or int(rng.integers(1, 4))
    levels, su, coop, budgets = [], [], [], []
    solo = float(rng.uniform(0.2, 0.6))
    for _ in range(num_sus):
        n = int(rng.integers(2, max_levels + 1))
        levels.append(np.concatenate([[0.0], np.cumsum(rng.uniform(0.1, 0.5, n - 1))]))
        su.append(np.concatenate([[0.0], np.sort(rng.uniform(0.05, 1.0, n - 1))]))
        coop.append(np.concatenate([[solo], np.sort(rng.uniform(solo, 1.0, n - 1))]))
        scale = rng.uniform(0.1, 0.8) if budget_scale is None else budget_scale
        budgets.append(scale * levels[-1][-1])
    params = make_params(levels, su, coop, solo, budgets, 0.0, name='random')
    assert validate(params) == []
    fraction = rng.uniform(0.0, 0.95) if load is None else load
    return params.with_arrival_rate(fraction * max_stable_rate(params).value)


@pytest.fixture
def random_instance():
    return random_params


def vertex_oracle(c, a_ub=None, b_ub=None, a_eq=None, b_eq=None, tol=1e-9):
    """
    Best value of max c·x s.t. a_ub·x <= b_ub, a_eq·x = b_eq, x >= 0 found by
    solving every square subsystem of active constraints. None when no basic
    solution is feasible. Only usable for a handful of variables.
    """
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    a_ub = np.zeros((0, n)) if a_ub is None else np.asarray(a_ub, dtype=float)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    a_eq = np.zeros((0, n)) if a_eq is None else np.asarray(a_eq, dtype=float)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    g = np.vstack([a_ub, -np.eye(n)])
    h = np.concatenate([b_ub, np.zeros(n)])
    free = n - a_eq.shape[0]
    best = None
    for active in itertools.combinations(range(g.shape[0]), free):
        lhs = np.vstack([a_eq, g[list(active)]])
        rhs = np.concatenate([b_eq, h[list(active)]])
        if np.linalg.matrix_rank(lhs) < n:
            continue
        x = np.linalg.solve(lhs, rhs)
        if np.all(g @ x <= h + tol) and np.allclose(a_eq @ x, b_eq, atol=tol):
            value = float(c @ x)
            best = value if best is None else max(best, value)
    return best


@pytest.fixture
def lp_oracle():
    return vertex_oracle
