"""Seeded generators for the benchmark problem families.

Each generator returns a :class:`ProblemInstance` pairing an objective oracle
with a feasible region.  Data distributions: standard normal designs,
uniform(0, 1) returns and uniform(1, 2) costs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .blmo import Budget, FeasibleRegion, GenericMilp, IntegerBox
from .milp import Indicator, MilpModel
from .objective import LogisticObjective, ObjectiveOracle, PoissonObjective, QuadraticObjective
from .simplex import LinearProgram

DEFAULT_RIDGE = 1e-3


@dataclass
class ProblemInstance:
    objective: ObjectiveOracle
    region: FeasibleRegion
    name: str = "instance"
    family: str = "custom"
    params: dict = field(default_factory=dict)
    known_optimum: Optional[float] = None

    def __post_init__(self):
        if self.objective.dimension != self.region.dimension:
            raise ValueError("objective and region dimensions differ")

    @property
    def integer_indices(self) -> tuple[int, ...]:
        return self.region.integer_indices

    @property
    def global_bounds(self):
        return self.region.global_bounds()

    @property
    def dimension(self) -> int:
        return self.region.dimension


def _big_m(A: np.ndarray, y: np.ndarray, ridge: float) -> float:
    col_norms = (A * A).sum(axis=0)
    proxy = max(float(col_norms.min()) + ridge, 1e-12)
    return float(np.clip(2.0 * np.abs(A.T @ y).max() / proxy, 1.0, 100.0))


def make_portfolio(n: int, integer_fraction: float = 1.0, seed: int = 0, upper: int = 1,
                   budget_fraction: float = 0.3) -> ProblemInstance:
    """``x^T M x - <r, x>`` subject to ``<c, x> <= b`` and ``0 <= x <= upper``."""
    if n < 2:
        raise ValueError("portfolio needs n >= 2")
    if not (0.0 < integer_fraction <= 1.0):
        raise ValueError("integer_fraction must lie in (0, 1]")
    if upper < 1:
        raise ValueError("upper bound must be at least 1")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    M = A.T @ A / n + 1e-2 * np.eye(n)
    r = rng.uniform(0.0, 1.0, n)
    c = rng.uniform(1.0, 2.0, n)
    b = budget_fraction * float(c.sum()) * upper
    mu = 2.0 * float(np.linalg.eigvalsh(M)[0])
    obj = QuadraticObjective(M, -r, 0.0, strong_convexity_mu=mu)
    obj.kind = "portfolio"
    n_int = int(math.ceil(integer_fraction * n))
    region = Budget(c, b, np.zeros(n), np.full(n, float(upper)), range(n_int))
    return ProblemInstance(obj, region, f"portfolio_n{n}_f{integer_fraction:g}_s{seed}", "portfolio",
                           {"n": n, "integer_fraction": integer_fraction, "seed": seed, "upper": upper,
                            "budget_fraction": budget_fraction})


def _cardinality_region(p: int, k: int, R: float) -> GenericMilp:
    """Variables ``(beta, z)``: ``-R z_i <= beta_i <= R z_i`` and ``sum z <= k``."""
    n = 2 * p
    rows = []
    for i in range(p):
        a = np.zeros(n)
        a[i], a[p + i] = 1.0, -R
        rows.append((a, "<=", 0.0))
        a = np.zeros(n)
        a[i], a[p + i] = -1.0, -R
        rows.append((a, "<=", 0.0))
    a = np.zeros(n)
    a[p:] = 1.0
    rows.append((a, "<=", float(k)))
    lower = np.concatenate([np.full(p, -R), np.zeros(p)])
    upper = np.concatenate([np.full(p, R), np.ones(p)])
    lp = LinearProgram.from_rows(np.zeros(n), rows, lower, upper)
    return GenericMilp(MilpModel(lp, range(p, n)))


def make_sparse_regression(m_samples: int, p_features: int, k_sparsity: int, seed: int = 0,
                           ridge: float = DEFAULT_RIDGE) -> ProblemInstance:
    """Least squares with at most ``k`` nonzero coefficients, big-M coupled to binaries."""
    if m_samples < 1 or p_features < 1 or k_sparsity < 1:
        raise ValueError("sizes must be positive")
    if k_sparsity > p_features:
        raise ValueError("sparsity k cannot exceed the number of features")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m_samples, p_features))
    beta = np.zeros(p_features)
    support = rng.choice(p_features, size=k_sparsity, replace=False)
    beta[support] = rng.standard_normal(k_sparsity)
    y = A @ beta + 0.1 * rng.standard_normal(m_samples)
    R = _big_m(A, y, ridge)
    p = p_features
    Q = np.zeros((2 * p, 2 * p))
    Q[:p, :p] = A.T @ A + ridge * np.eye(p)
    q = np.zeros(2 * p)
    q[:p] = -2.0 * A.T @ y
    obj = QuadraticObjective(Q, q, float(y @ y))
    obj.kind = "sparse_reg"
    region = _cardinality_region(p, k_sparsity, R)
    return ProblemInstance(obj, region, f"sparse_reg_m{m_samples}_p{p}_k{k_sparsity}_s{seed}", "sparse_reg",
                           {"m": m_samples, "p": p, "k": k_sparsity, "seed": seed, "R": R})


def _glm_data(m, p, k, seed, scale):
    rng = np.random.default_rng(seed)
    A = scale * rng.standard_normal((m, p))
    beta = np.zeros(p)
    support = rng.choice(p, size=k, replace=False)
    beta[support] = rng.standard_normal(k)
    return rng, A, beta


def make_poisson_regression(m_samples: int, p_features: int, k_sparsity: int, seed: int = 0,
                            ridge: float = DEFAULT_RIDGE, labels=None, radius: float = 5.0) -> ProblemInstance:
    """Sparse Poisson regression; ``labels`` overrides the sampled counts."""
    if k_sparsity > p_features:
        raise ValueError("sparsity k cannot exceed the number of features")
    rng, A, beta = _glm_data(m_samples, p_features, k_sparsity, seed, 0.5)
    if labels is None:
        y = rng.poisson(np.exp(A @ beta)).astype(float)
    else:
        y = np.asarray(labels, dtype=float)
        if y.shape[0] != m_samples:
            raise ValueError("labels must have one entry per sample")
    if np.any(y < 0):
        raise ValueError("Poisson counts must be nonnegative")
    obj = PoissonObjective(A, y, ridge, 2 * p_features)
    region = _cardinality_region(p_features, k_sparsity, float(radius))
    return ProblemInstance(obj, region, f"poisson_m{m_samples}_p{p_features}_k{k_sparsity}_s{seed}", "poisson",
                           {"m": m_samples, "p": p_features, "k": k_sparsity, "seed": seed, "R": radius})


def make_logistic_regression(m_samples: int, p_features: int, k_sparsity: int, seed: int = 0,
                             ridge: float = DEFAULT_RIDGE, radius: float = 5.0) -> ProblemInstance:
    """Sparse logistic regression with labels in {-1, +1}."""
    if k_sparsity > p_features:
        raise ValueError("sparsity k cannot exceed the number of features")
    rng, A, beta = _glm_data(m_samples, p_features, k_sparsity, seed, 1.0)
    prob = 1.0 / (1.0 + np.exp(-(A @ beta)))
    y = np.where(rng.uniform(size=m_samples) < prob, 1.0, -1.0)
    obj = LogisticObjective(A, y, ridge, 2 * p_features)
    region = _cardinality_region(p_features, k_sparsity, float(radius))
    return ProblemInstance(obj, region, f"logistic_m{m_samples}_p{p_features}_k{k_sparsity}_s{seed}", "logistic",
                           {"m": m_samples, "p": p_features, "k": k_sparsity, "seed": seed, "R": radius})


def make_tcmp(n: int, lam: float, mu_r: float, tau, seed: int = 0, m_samples: Optional[int] = None,
              radius: Optional[float] = None) -> ProblemInstance:
    """Tailed cardinality-penalized least squares with indicator rows.

    Variables are ``(x, z, s)``; ``z_i = 1`` forces ``s_i <= 0`` and hence
    ``|x_i| <= tau_i`` through the two slack rows.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if lam <= 0 or mu_r <= 0:
        raise ValueError("lambda and mu_r must be positive")
    tau = np.broadcast_to(np.asarray(tau, dtype=float), (n,)).copy()
    if np.any(tau < 0):
        raise ValueError("thresholds tau must be nonnegative")
    m = 2 * n if m_samples is None else m_samples
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    x_true = rng.standard_normal(n)
    y = A @ x_true + 0.1 * rng.standard_normal(m)
    R = _big_m(A, y, mu_r) if radius is None else float(radius)
    N = 3 * n
    Q = np.zeros((N, N))
    Q[:n, :n] = A.T @ A + mu_r * np.eye(n)
    q = np.zeros(N)
    q[:n] = -2.0 * A.T @ y
    q[n:2 * n] = -lam
    obj = QuadraticObjective(Q, q, float(y @ y))
    obj.kind = "tcmp"
    rows = []
    for i in range(n):
        a = np.zeros(N)
        a[i], a[2 * n + i] = 1.0, -1.0
        rows.append((a, "<=", float(tau[i])))
        a = np.zeros(N)
        a[i], a[2 * n + i] = -1.0, -1.0
        rows.append((a, "<=", float(tau[i])))
    inds = []
    for i in range(n):
        a = np.zeros(N)
        a[2 * n + i] = 1.0
        inds.append(Indicator(n + i, a, 0.0))
    lower = np.concatenate([np.full(n, -R), np.zeros(2 * n)])
    upper = np.concatenate([np.full(n, R), np.ones(n), np.full(n, R)])
    lp = LinearProgram.from_rows(np.zeros(N), rows, lower, upper)
    region = GenericMilp(MilpModel(lp, range(n, 2 * n), inds))
    return ProblemInstance(obj, region, f"tcmp_n{n}_s{seed}", "tcmp",
                           {"n": n, "lambda": lam, "mu_r": mu_r, "tau": tau.tolist(), "seed": seed, "R": R})


def make_box_quadratic(n: int, upper: int = 2, seed: int = 0, mu: float = 1.0) -> ProblemInstance:
    """Strongly convex quadratic over an integer box; used as a small test family."""
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n, n))
    Q = B.T @ B / n + mu / 2 * np.eye(n)
    center = rng.uniform(0, upper, n)
    q = -2.0 * Q @ center
    obj = QuadraticObjective(Q, q, float(center @ Q @ center),
                             strong_convexity_mu=2.0 * float(np.linalg.eigvalsh(Q)[0]))
    region = IntegerBox(np.zeros(n), np.full(n, float(upper)), range(n))
    return ProblemInstance(obj, region, f"boxquad_n{n}_s{seed}", "custom_quadratic",
                           {"n": n, "upper": upper, "seed": seed})
