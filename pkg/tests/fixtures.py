"""Seeded instance generators shared by the test modules."""

import numpy as np

from hullfw.blmo import IntegerBox
from hullfw.objective import QuadraticObjective
from hullfw.problems import (ProblemInstance, make_box_quadratic, make_logistic_regression, make_poisson_regression,
                             make_portfolio, make_sparse_regression, make_tcmp)


def random_instance(rng: np.random.Generator, k: int):
    """Small instance from the three main families, cycling by ``k``."""
    kind = k % 3
    if kind == 0:
        return make_portfolio(int(rng.integers(3, 8)), float(rng.choice([1.0, 0.5])), k,
                              upper=int(rng.integers(1, 4)))
    if kind == 1:
        return make_sparse_regression(int(rng.integers(8, 15)), int(rng.integers(3, 7)), 2, k)
    return make_tcmp(int(rng.integers(2, 6)), 0.5, 0.1, 0.3, k)


def fixture_suite():
    """Deterministic instances small enough for brute force at every node."""
    return [
        make_portfolio(5, 1.0, 1, upper=2),
        make_portfolio(6, 0.5, 2, upper=3),
        make_portfolio(7, 1.0, 3, upper=1),
        make_portfolio(4, 1.0, 4, upper=4),
        make_sparse_regression(10, 4, 2, 5),
        make_sparse_regression(12, 5, 2, 6),
        make_tcmp(3, 0.5, 0.1, 0.3, 7),
        make_tcmp(4, 0.5, 0.1, 0.3, 8),
        make_box_quadratic(4, upper=3, seed=9),
        make_box_quadratic(5, upper=2, seed=10),
        make_poisson_regression(15, 3, 2, 11),
        make_logistic_regression(15, 3, 2, 12),
    ]


def random_milp(rng: np.random.Generator, with_indicators: bool = False):
    """Pure-integer model with at most ten variables and a random objective."""
    from hullfw.milp import Indicator, MilpModel
    from hullfw.simplex import LinearProgram

    n = int(rng.integers(2, 11))
    top = 1 if n > 7 else int(rng.integers(1, 4))
    m = int(rng.integers(1, 4))
    A = rng.integers(-4, 5, size=(m, n)).astype(float)
    senses = tuple(rng.choice(["<=", ">=", "="], p=[0.6, 0.3, 0.1]) for _ in range(m))
    x0 = rng.integers(0, top + 1, n).astype(float)
    slack = rng.integers(0, 4, m).astype(float)
    rhs = A @ x0 + np.where(np.array(senses) == "<=", slack, np.where(np.array(senses) == ">=", -slack, 0.0))
    if rng.random() < 0.1:
        rhs = rhs + rng.integers(-10, 11, m)  # sometimes infeasible
    lp = LinearProgram(np.zeros(n), A, senses, rhs, np.zeros(n), np.full(n, float(top)))
    inds = []
    if with_indicators and top == 1 and n >= 3:
        z = int(rng.integers(0, n))
        a = np.zeros(n)
        others = [j for j in range(n) if j != z]
        a[rng.choice(others, size=2, replace=False)] = 1.0
        inds.append(Indicator(z, a, 1.0))
    return MilpModel(lp, range(n), inds), rng.standard_normal(n)


def outside_center_quadratic(seed: int):
    """Strongly convex quadratic on ``[0, 3]^4`` whose unconstrained minimizer lies partly outside."""
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((4, 4))
    Q = B.T @ B / 4 + 0.5 * np.eye(4)
    center = rng.uniform(-3.0, 6.0, 4)
    obj = QuadraticObjective(Q, -2.0 * Q @ center, float(center @ Q @ center),
                             strong_convexity_mu=2.0 * float(np.linalg.eigvalsh(Q)[0]))
    return ProblemInstance(obj, IntegerBox(np.zeros(4), np.full(4, 3.0), range(4)), f"outside_{seed}")
