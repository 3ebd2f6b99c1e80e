"""First-order objective oracles.

Every oracle exposes ``value(x)`` and ``gradient(x)`` plus optional curvature
metadata used by the node-bound improvements: a strong convexity modulus and
Hölder error bound parameters ``(theta, M)``.
"""

from __future__ import annotations

from typing import Optional

import numpy as np


class ObjectiveOracle:
    """Black-box convex function with gradient."""

    kind = "abstract"

    def __init__(self, dimension: int, strong_convexity_mu: Optional[float] = None,
                 sharpness: Optional[tuple[float, float]] = None):
        if dimension <= 0:
            raise ValueError("dimension must be positive")
        if strong_convexity_mu is not None and strong_convexity_mu < 0:
            raise ValueError("strong convexity modulus must be nonnegative")
        if sharpness is not None:
            theta, M = sharpness
            if not (0.0 <= theta <= 0.5) or M <= 0:
                raise ValueError("sharpness needs theta in [0, 1/2] and M > 0")
        self.dimension = int(dimension)
        self.strong_convexity_mu = strong_convexity_mu
        self.sharpness = sharpness

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x: np.ndarray) -> float:
        return self.value(x)

    def to_dict(self) -> dict:
        raise NotImplementedError


class QuadraticObjective(ObjectiveOracle):
    """``f(x) = x^T Q x + <q, x> + c`` with ``Q`` symmetric positive semidefinite."""

    kind = "custom_quadratic"

    def __init__(self, Q, q, constant: float = 0.0, strong_convexity_mu=None, sharpness=None):
        Q = np.asarray(Q, dtype=float)
        q = np.asarray(q, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or Q.shape[0] != q.shape[0]:
            raise ValueError("Q must be square and match q")
        super().__init__(q.shape[0], strong_convexity_mu, sharpness)
        self.Q = 0.5 * (Q + Q.T)
        self.q = q
        self.constant = float(constant)

    def value(self, x):
        return float(x @ (self.Q @ x) + self.q @ x + self.constant)

    def gradient(self, x):
        return 2.0 * (self.Q @ x) + self.q

    def curvature(self, d) -> float:
        """``d^T Q d``; exact line searches use it."""
        return float(d @ (self.Q @ d))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": {
                "Q": self.Q.tolist(),
                "q": self.q.tolist(),
                "constant": self.constant,
                "mu": self.strong_convexity_mu,
                "sharpness": list(self.sharpness) if self.sharpness else None,
            },
        }


class LogisticObjective(ObjectiveOracle):
    """``sum_i log(1 + exp(-y_i <a_i, beta>)) + mu_r ||beta||^2`` on the first ``p`` coordinates.

    Labels are in {-1, +1}.  Remaining coordinates (the support indicators)
    do not enter the loss.
    """

    kind = "logistic"

    def __init__(self, A, y, mu_r: float, dimension: int):
        A = np.asarray(A, dtype=float)
        y = np.asarray(y, dtype=float)
        if A.shape[0] != y.shape[0]:
            raise ValueError("design and labels disagree in length")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("logistic labels must be -1 or +1")
        super().__init__(dimension)
        self.A, self.y, self.mu_r = A, y, float(mu_r)
        self.p = A.shape[1]

    def value(self, x):
        beta = x[: self.p]
        margins = -self.y * (self.A @ beta)
        return float(np.logaddexp(0.0, margins).sum() + self.mu_r * beta @ beta)

    def gradient(self, x):
        beta = x[: self.p]
        margins = -self.y * (self.A @ beta)
        sig = np.exp(-np.logaddexp(0.0, -margins))
        g = np.zeros(self.dimension)
        g[: self.p] = self.A.T @ (-self.y * sig) + 2.0 * self.mu_r * beta
        return g

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": {"A": self.A.tolist(), "y": self.y.tolist(),
                                              "mu_r": self.mu_r, "dimension": self.dimension}}


class PoissonObjective(ObjectiveOracle):
    """``sum_i exp(<a_i, beta>) - y_i <a_i, beta> + mu_r ||beta||^2`` on the first ``p`` coordinates."""

    kind = "poisson"

    def __init__(self, A, y, mu_r: float, dimension: int):
        A = np.asarray(A, dtype=float)
        y = np.asarray(y, dtype=float)
        if A.shape[0] != y.shape[0]:
            raise ValueError("design and labels disagree in length")
        if np.any(y < 0):
            raise ValueError("Poisson counts must be nonnegative")
        super().__init__(dimension)
        self.A, self.y, self.mu_r = A, y, float(mu_r)
        self.p = A.shape[1]

    def value(self, x):
        beta = x[: self.p]
        eta = self.A @ beta
        return float(np.exp(eta).sum() - self.y @ eta + self.mu_r * beta @ beta)

    def gradient(self, x):
        beta = x[: self.p]
        eta = self.A @ beta
        g = np.zeros(self.dimension)
        g[: self.p] = self.A.T @ (np.exp(eta) - self.y) + 2.0 * self.mu_r * beta
        return g

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": {"A": self.A.tolist(), "y": self.y.tolist(),
                                              "mu_r": self.mu_r, "dimension": self.dimension}}


def objective_from_dict(data: dict) -> ObjectiveOracle:
    kind = data["kind"]
    p = data["params"]
    if kind in ("custom_quadratic", "portfolio", "sparse_reg", "tcmp"):
        sharp = tuple(p["sharpness"]) if p.get("sharpness") else None
        obj = QuadraticObjective(p["Q"], p["q"], p.get("constant", 0.0), p.get("mu"), sharp)
        obj.kind = kind
        return obj
    if kind == "logistic":
        return LogisticObjective(p["A"], p["y"], p["mu_r"], p["dimension"])
    if kind == "poisson":
        return PoissonObjective(p["A"], p["y"], p["mu_r"], p["dimension"])
    raise ValueError(f"unknown objective kind {kind!r}")


def check_gradient(obj: ObjectiveOracle, x: np.ndarray, h: float = 1e-5) -> float:
    """Largest scaled deviation between the gradient and central differences."""
    g = obj.gradient(x)
    worst = 0.0
    for j in range(obj.dimension):
        e = np.zeros(obj.dimension)
        e[j] = h
        fd = (obj.value(x + e) - obj.value(x - e)) / (2 * h)
        worst = max(worst, abs(g[j] - fd) / (1.0 + abs(g[j])))
    return worst
