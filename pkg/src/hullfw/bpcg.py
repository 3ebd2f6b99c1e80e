"""Lazy blended pairwise conditional gradient for node relaxations.

The iterate is kept as a convex combination of oracle vertices (the active
set).  Vertices dropped from it go to a shadow set so that later nodes can
reuse them without another oracle call.  Progress is measured against a
lazily halved gap estimate ``phi``.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .blmo import BoundState, FeasibleRegion
from .objective import ObjectiveOracle

WEIGHT_FLOOR = 1e-12
VERTEX_TOL = 1e-9
MAX_ITERATIONS = 10_000
CHECK_CLOCK_EVERY = 256
CORRECTIVE_EVERY = 50  # consecutive local steps before a corrective pass over the active set


class NumericalFailure(ArithmeticError):
    """Objective or gradient produced a non-finite value."""

    def __init__(self, message: str, iterate: np.ndarray):
        super().__init__(message)
        self.iterate = iterate


class Termination(enum.Enum):
    GAP_TOLERANCE = "GapTolerance"
    CUTOFF = "Cutoff"
    TREE_STATE = "TreeState"
    ITERATION_LIMIT = "IterationLimit"
    TIME_LIMIT = "TimeLimit"


def _row(M: np.ndarray, v: np.ndarray) -> int:
    """Index of the first row of ``M`` equal to ``v`` within ``VERTEX_TOL``, else -1."""
    if M.shape[0] == 0:
        return -1
    hits = np.flatnonzero(np.all(np.abs(M - v) <= VERTEX_TOL, axis=1))
    return int(hits[0]) if hits.size else -1


def _find(vertices: list[np.ndarray], v: np.ndarray) -> int:
    for i, u in enumerate(vertices):
        if np.all(np.abs(u - v) <= VERTEX_TOL):
            return i
    return -1


@dataclass
class ActiveSet:
    vertices: list[np.ndarray] = field(default_factory=list)
    weights: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.vertices = [np.asarray(v, dtype=float) for v in self.vertices]
        self.weights = [float(w) for w in self.weights]
        if len(self.vertices) != len(self.weights):
            raise ValueError("one weight per vertex")

    @classmethod
    def single(cls, v) -> "ActiveSet":
        return cls([np.asarray(v, dtype=float)], [1.0])

    def __len__(self) -> int:
        return len(self.vertices)

    def copy(self) -> "ActiveSet":
        return ActiveSet([v.copy() for v in self.vertices], list(self.weights))

    def iterate(self) -> np.ndarray:
        return np.asarray(self.weights) @ np.vstack(self.vertices)

    def index(self, v) -> int:
        return _find(self.vertices, v)

    def normalize(self) -> None:
        total = sum(self.weights)
        self.weights = [w / total for w in self.weights]


@dataclass
class ShadowSet:
    vertices: list[np.ndarray] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.vertices)

    def copy(self) -> "ShadowSet":
        return ShadowSet([v.copy() for v in self.vertices])

    def index(self, v) -> int:
        return _find(self.vertices, v)

    def add(self, v) -> None:
        if self.index(v) < 0:
            self.vertices.append(np.asarray(v, dtype=float).copy())


@dataclass
class NodeSolveResult:
    iterate: np.ndarray
    value: float
    certified_gap: float
    active: ActiveSet
    shadow: ShadowSet
    incumbents: list[tuple[np.ndarray, float]]
    lmo_calls: int
    termination: Termination
    iterations: int = 0
    fw_vertices: list[np.ndarray] = field(default_factory=list)

    @property
    def dual_bound(self) -> float:
        return self.value - self.certified_gap


def adaptive_step(objective: ObjectiveOracle, x, d, gamma_max: float, L_est: float) -> tuple[float, float]:
    """Backtracking short step along ``x - gamma d``.

    Tries ``L = L_est / 2`` first and doubles until the quadratic upper model
    certifies sufficient decrease.
    """
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    if gamma_max <= 0:
        raise ValueError("gamma_max must be positive")
    fx = objective.value(x)
    slope = float(objective.gradient(x) @ d)
    if not slope > 0:
        raise ValueError("d is not a descent direction for the step x - gamma d")
    dd = float(d @ d)
    L = L_est / 2.0
    for _ in range(200):
        gamma = min(slope / (L * dd), gamma_max)
        if objective.value(x - gamma * d) <= fx - gamma * slope + 0.5 * gamma * gamma * L * dd + 1e-15 * max(1.0, abs(fx)):
            return gamma, L
        L *= 2.0
    raise NumericalFailure("step size search did not terminate", x)


def _exact_quadratic_step(objective, slope: float, d, gamma_max: float) -> float:
    curv = objective.curvature(d)
    if curv <= 0:
        return gamma_max
    return min(slope / (2.0 * curv), gamma_max)


def _project_simplex(y: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, y.shape[0] + 1)
    r = k[u - css / k > 0][-1]
    return np.maximum(y - css[r - 1] / r, 0.0)


def _simplex_qp(H: np.ndarray, b: np.ndarray, w: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    """Primal active-set method for ``min w^T H w + <b, w>`` over the simplex (``H`` PSD).

    Each iteration solves the KKT system on the current support and moves
    toward its solution, stopping at the first weight that reaches zero.
    When the support problem is unbounded (singular ``H``) the projected
    gradient direction is used with an exact line search.  Every step is a
    descent step, so the result is never worse than ``w``.
    """
    n = w.shape[0]
    w = w.copy()
    support = w > WEIGHT_FLOOR
    for _ in range(max_iter):
        g = 2.0 * H @ w + b
        idx = np.flatnonzero(support)
        if float(g[idx].max() - g.min()) <= tol:
            break
        k = idx.shape[0]
        K = np.zeros((k + 1, k + 1))
        K[:k, :k] = 2.0 * H[np.ix_(idx, idx)]
        K[:k, k] = -1.0
        K[k, :k] = 1.0
        rhs = np.concatenate([-b[idx], [1.0]])
        sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
        consistent = np.linalg.norm(K @ sol - rhs) <= 1e-9 * max(1.0, np.linalg.norm(rhs))
        if consistent:
            target = np.zeros(n)
            target[idx] = sol[:k]
            d = target - w
        else:
            # unbounded on the support: descend along the null space of H (objective is linear there)
            M = np.vstack([H[np.ix_(idx, idx)], np.ones((1, k))])
            _, sv, Vt = np.linalg.svd(M)
            rank = int(np.sum(sv > 1e-10 * sv[0]))
            Z = Vt[rank:].T
            d = np.zeros(n)
            d[idx] = -Z @ (Z.T @ g[idx])
        if np.abs(d).max() <= 1e-15:
            # support problem solved: bring in the most promising outside vertex
            outside = np.flatnonzero(~support)
            if outside.size == 0:
                break
            j = outside[np.argmin(g[outside])]
            if g[j] >= g[idx].max() - tol:
                break
            support[j] = True
            continue
        # longest feasible step along d, then the exact minimizer on the segment
        neg = d < -1e-15
        alpha_max = float(np.min(w[neg] / -d[neg])) if neg.any() else np.inf
        slope = float(g @ d)
        curv = float(d @ H @ d)
        if consistent:
            alpha = min(1.0, alpha_max)
        elif slope < 0:
            alpha = alpha_max if curv <= 1e-15 else min(-slope / (2.0 * curv), alpha_max)
        else:
            break
        if not np.isfinite(alpha):
            break
        w = np.maximum(w + alpha * d, 0.0)
        w /= w.sum()
        support = w > WEIGHT_FLOOR
    return w


def corrective_weights(objective: ObjectiveOracle, V: np.ndarray, w: np.ndarray, tol: float,
                       max_iter: int = 500) -> tuple[np.ndarray, float]:
    """Decrease ``f(V^T w)`` over the weight simplex by accelerated projected gradient.

    Stops once the local pairwise gap (largest support score minus smallest
    score) is at most ``tol``.  Returns the best weights seen and their value,
    so the result never increases the objective.
    """
    Q = getattr(objective, "Q", None)
    if Q is not None:
        H = V @ Q @ V.T
        b = V @ objective.q
        w_new = _simplex_qp(H, b, w, tol, 4 * len(w) + 20)
        return w_new, objective.value(w_new @ V)
    f = lambda u: objective.value(u @ V)  # noqa: E731
    best_w, best_f = w, f(w)
    x, y, t, L = w, w, 1.0, None
    fx = best_f
    for _ in range(max_iter):
        gx = V @ objective.gradient(x @ V)
        support = x > WEIGHT_FLOOR
        if float(gx[support].max() - gx.min()) <= tol:
            break
        fy = f(y)
        gy = V @ objective.gradient(y @ V)
        if L is None:
            L = max(float(np.abs(gy).max()), 1e-8)
        while True:
            z = _project_simplex(y - gy / L)
            diff = z - y
            fz = f(z)
            if fz <= fy + gy @ diff + 0.5 * L * (diff @ diff) + 1e-15 * max(1.0, abs(fy)):
                break
            L *= 2.0
        if fz < best_f:
            best_w, best_f = z, fz
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        if fz > fx:  # restart the momentum
            y, t = x, 1.0
            continue
        y = z + (t - 1.0) / t_new * (z - x)
        x, fx, t = z, fz, t_new
        L = max(L / 1.5, 1e-12)
    return best_w, best_f


def frank_wolfe_gap(objective: ObjectiveOracle, region: FeasibleRegion, bounds: BoundState, x) -> float:
    """``max_v <grad f(x), x - v>`` over the region inside ``bounds`` (one oracle call)."""
    g = objective.gradient(x)
    v = region.lmo(bounds, g)
    return max(float(g @ (x - v)), 0.0)


class _Stepper:
    def __init__(self, objective: ObjectiveOracle):
        self.objective = objective
        self.exact = hasattr(objective, "curvature")
        self.L = None

    def step(self, x, g, d, gamma_max) -> float:
        slope = float(g @ d)
        if slope <= 0:
            return 0.0
        if self.exact:
            return _exact_quadratic_step(self.objective, slope, d, gamma_max)
        if self.L is None:
            h = 1e-3
            gd = self.objective.gradient(x - h * d)
            self.L = max(float(np.linalg.norm(g - gd)) / (h * float(np.linalg.norm(d))), 1e-8)
        gamma, self.L = adaptive_step(self.objective, x, d, gamma_max, self.L)
        return gamma


def solve_node(objective: ObjectiveOracle, region: FeasibleRegion, bounds: BoundState,
               warm_active: ActiveSet, warm_shadow: Optional[ShadowSet] = None, eps_tol: float = 1e-6,
               primal_cutoff: float = np.inf, laziness_K: float = 2.0,
               tree_state_probe: Optional[Callable[[float], bool]] = None, *,
               relaxed: bool = False, max_iterations: int = MAX_ITERATIONS, use_shadow: bool = True,
               certify: bool = True, deadline: Optional[float] = None,
               trace: Optional[Callable[[dict], None]] = None) -> NodeSolveResult:
    """Approximately minimize ``objective`` over the convex hull of the region within ``bounds``.

    With ``relaxed=True`` the continuous relaxation replaces the integer hull
    (used for strong branching estimates and the NLP baseline).
    """
    if eps_tol <= 0:
        raise ValueError("eps_tol must be positive")
    if laziness_K < 1:
        raise ValueError("laziness K must be at least 1")
    if len(warm_active) == 0:
        raise ValueError("warm-start active set is empty")
    oracle = region.relaxed_lmo if relaxed else region.lmo

    V = np.vstack(warm_active.vertices).astype(float)
    w = np.asarray(warm_active.weights, dtype=float)
    w = w / w.sum()
    dim = V.shape[1]
    S = np.vstack(warm_shadow.vertices).astype(float) if (use_shadow and warm_shadow) else np.zeros((0, dim))
    x = w @ V
    stepper = _Stepper(objective)
    lmo_calls = 0
    incumbents: list[tuple[np.ndarray, float]] = []
    fw_vertices: list[np.ndarray] = []

    def evaluate(point):
        fx = objective.value(point)
        gx = objective.gradient(point)
        if not np.isfinite(fx) or not np.all(np.isfinite(gx)):
            raise NumericalFailure("non-finite objective or gradient", point.copy())
        return fx, gx

    def call_oracle(g):
        nonlocal lmo_calls
        lmo_calls += 1
        v = oracle(bounds, g)
        if not relaxed:
            incumbents.append((v, objective.value(v)))
        return v

    def shelve(v):
        nonlocal S
        if use_shadow and _row(S, v) < 0 and _row(V, v) < 0:
            S = np.vstack([S, v])

    fx, g = evaluate(x)
    v0 = call_oracle(g)
    gap = float(g @ (x - v0))
    exact = (x.copy(), max(gap, 0.0), v0)
    shelve(v0)
    phi = max(gap, 0.0) / 2.0

    term = Termination.ITERATION_LIMIT
    it = 0
    cutoff_retries = 0
    local_steps = 0
    while True:
        if phi <= eps_tol:
            term = Termination.GAP_TOLERANCE
        elif fx - phi >= primal_cutoff and not (
                certify and np.array_equal(exact[0], x) and fx - exact[1] < primal_cutoff):
            term = Termination.CUTOFF
        elif tree_state_probe is not None and tree_state_probe(fx - phi):
            term = Termination.TREE_STATE
        elif it >= max_iterations:
            term = Termination.ITERATION_LIMIT
        elif deadline is not None and it % CHECK_CLOCK_EVERY == 0 and time.monotonic() > deadline:
            term = Termination.TIME_LIMIT
        else:
            term = None
        if term is not None:
            if certify and not np.array_equal(exact[0], x):
                v = call_oracle(g)
                exact = (x.copy(), max(float(g @ (x - v)), 0.0), v)
                shelve(v)
            if certify and term == Termination.CUTOFF and fx - exact[1] < primal_cutoff and cutoff_retries < 3:
                # lazy estimate was optimistic; keep going with the certified gap
                cutoff_retries += 1
                phi = exact[1] / 2.0
                continue
            break

        it += 1
        scores = V @ g
        ia = int(np.argmax(scores))
        is_ = int(np.argmin(scores))
        step_kind = None
        if scores[ia] - scores[is_] >= phi:
            step_kind = "pairwise"
        elif use_shadow and len(S):
            sscores = S @ g
            k = int(np.argmin(sscores))
            if scores[ia] - sscores[k] >= phi:
                V = np.vstack([V, S[k]])
                S = np.delete(S, k, axis=0)
                w = np.append(w, 0.0)
                is_ = len(w) - 1
                step_kind = "shadow-promote"
        if step_kind is not None:
            d = V[ia] - V[is_]
            gamma_max = float(w[ia])
            gamma = stepper.step(x, g, d, gamma_max)
            w[ia] -= gamma
            w[is_] += gamma
            if gamma >= gamma_max:
                w[ia] = 0.0
        else:
            # lazy pass over cached vertices before asking the oracle
            xg = float(x @ g)
            i_best = int(np.argmin(scores))
            best_val, in_shadow = float(scores[i_best]), False
            if use_shadow and len(S):
                sscores = S @ g
                k = int(np.argmin(sscores))
                if sscores[k] < best_val:
                    best_val, i_best, in_shadow = float(sscores[k]), k, True
            target = None
            if xg - best_val >= phi / laziness_K:
                step_kind = "fw-cached"
                if in_shadow:
                    V = np.vstack([V, S[i_best]])
                    S = np.delete(S, i_best, axis=0)
                    w = np.append(w, 0.0)
                    target = len(w) - 1
                else:
                    target = i_best
            else:
                v = call_oracle(g)
                gap = float(g @ (x - v))
                exact = (x.copy(), max(gap, 0.0), v)
                if gap >= phi / laziness_K:
                    step_kind = "fw"
                    fw_vertices.append(v.copy())
                    idx = _row(V, v)
                    if idx < 0:
                        sidx = _row(S, v)
                        if sidx >= 0:
                            S = np.delete(S, sidx, axis=0)
                        V = np.vstack([V, v])
                        w = np.append(w, 0.0)
                        idx = len(w) - 1
                    target = idx
                else:
                    step_kind = "halve"
                    shelve(v)
                    phi = min(phi / 2.0, max(gap, 0.0))
            if target is not None:
                d = x - V[target]
                gamma = stepper.step(x, g, d, 1.0)
                w *= (1.0 - gamma)
                w[target] += gamma
        local_steps = local_steps + 1 if step_kind in ("pairwise", "shadow-promote", "fw-cached") else 0
        if local_steps >= CORRECTIVE_EVERY and len(w) > 1:
            # pairwise steps are zig-zagging: descend on the weights directly
            local_steps = 0
            w_new, f_new = corrective_weights(objective, V, w, phi / 2.0)
            if f_new < objective.value(w @ V):
                w = w_new
                step_kind = "corrective"
        # evict dead vertices
        dead = w <= WEIGHT_FLOOR
        if dead.any():
            if use_shadow:
                S = np.vstack([S, V[dead]])
            V = V[~dead]
            w = w[~dead]
        w = w / w.sum()
        if step_kind != "halve":
            x_new = w @ V
            f_new, g_new = evaluate(x_new)
            x, fx, g = x_new, f_new, g_new
        if trace is not None:
            trace({"iteration": it, "f": fx, "phi": phi, "step": step_kind, "lmo_calls": lmo_calls})

    if np.array_equal(exact[0], x):
        gap_out = exact[1]
    else:
        # uncertified runs report the lazy estimate scaled by its worst-case slack
        gap_out = 2.0 * laziness_K * max(phi, 0.0)
    active = ActiveSet(list(V), list(w))
    return NodeSolveResult(
        iterate=x, value=fx, certified_gap=gap_out,
        active=active, shadow=ShadowSet(list(S)), incumbents=incumbents, lmo_calls=lmo_calls,
        termination=term, iterations=it, fw_vertices=fw_vertices,
    )
