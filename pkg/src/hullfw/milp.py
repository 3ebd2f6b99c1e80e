"""LP-based branch-and-bound for small mixed-integer linear programs.

Indicator rows ``z = 1 => <a, x> <= b`` are part of the LP but only switched on
at nodes where ``z`` is fixed to one; a node whose LP point has ``z = 1`` with
the row violated is branched on ``z`` like a fractional variable.
"""

from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .simplex import LinearProgram, LpStatus, SimplexSolver

INT_TOL = 1e-6
ROW_TOL = 1e-6


class MilpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"


@dataclass(frozen=True)
class Indicator:
    """``x[z] = 1  =>  <coeffs, x> <= rhs``."""

    z: int
    coeffs: np.ndarray
    rhs: float


@dataclass
class MilpModel:
    base: LinearProgram
    integer_indices: Sequence[int]
    indicators: Sequence[Indicator] = field(default_factory=tuple)

    def __post_init__(self):
        self.integer_indices = tuple(int(j) for j in self.integer_indices)
        self.indicators = tuple(self.indicators)
        jset = set(self.integer_indices)
        for ind in self.indicators:
            if ind.z not in jset:
                raise ValueError(f"indicator variable {ind.z} is not integer")
            if self.base.lower[ind.z] < 0 or self.base.upper[ind.z] > 1:
                raise ValueError(f"indicator variable {ind.z} must be binary")
            if len(ind.coeffs) != self.base.n_vars:
                raise ValueError("indicator row has the wrong length")
        self._int_mask = np.zeros(self.base.n_vars, dtype=bool)
        self._int_mask[list(self.integer_indices)] = True

    @property
    def n_vars(self) -> int:
        return self.base.n_vars

    @property
    def int_mask(self) -> np.ndarray:
        return self._int_mask

    def extended_lp(self, objective) -> LinearProgram:
        """Base rows followed by every indicator row (as ``<=`` rows)."""
        lp = self.base
        if not self.indicators:
            return lp.with_objective(objective)
        A = np.vstack([lp.A] + [ind.coeffs[None, :] for ind in self.indicators])
        senses = tuple(lp.senses) + ("<=",) * len(self.indicators)
        rhs = np.concatenate([lp.rhs, [ind.rhs for ind in self.indicators]])
        return LinearProgram(objective, A, senses, rhs, lp.lower, lp.upper)

    def row_activity(self, lower) -> Optional[np.ndarray]:
        if not self.indicators:
            return None
        m = self.base.n_rows
        act = np.ones(m + len(self.indicators), dtype=bool)
        for k, ind in enumerate(self.indicators):
            act[m + k] = lower[ind.z] >= 0.5
        return act

    def indicator_violations(self, x, tol=ROW_TOL) -> list[int]:
        """Indicator variables whose value is one while their row is violated."""
        out = []
        for ind in self.indicators:
            if x[ind.z] > 0.5 and float(ind.coeffs @ x) > ind.rhs + tol:
                out.append(ind.z)
        return out

    def is_feasible(self, x, lower=None, upper=None, tol=ROW_TOL) -> bool:
        lower = self.base.lower if lower is None else lower
        upper = self.base.upper if upper is None else upper
        if np.any(x < lower - tol) or np.any(x > upper + tol):
            return False
        xi = x[self._int_mask]
        if np.any(np.abs(xi - np.round(xi)) > INT_TOL):
            return False
        if self.base.n_rows and self.base.row_residuals(x).max() > tol:
            return False
        return not self.indicator_violations(x, tol)


@dataclass
class MilpSolution:
    status: MilpStatus
    point: Optional[np.ndarray] = None
    value: float = float("inf")
    nodes: int = 0


@dataclass(order=True)
class _Node:
    bound: float
    node_id: int
    lower: np.ndarray = field(compare=False)
    upper: np.ndarray = field(compare=False)
    point: np.ndarray = field(compare=False)
    basis: object = field(compare=False)
    reduced_costs: Optional[np.ndarray] = field(compare=False, default=None)


class MilpSolver:
    """Best-bound branch-and-bound over ``model``; reusable across objectives."""

    def __init__(self, model: MilpModel):
        self.model = model
        self._lp_solves = 0
        self._solvers: dict[bytes, SimplexSolver] = {}

    def count_lp_solves(self) -> int:
        return self._lp_solves

    def reset_counter(self) -> None:
        self._lp_solves = 0

    def _simplex_for(self, objective: np.ndarray) -> SimplexSolver:
        key = objective.tobytes()
        solver = self._solvers.get(key)
        if solver is None:
            if len(self._solvers) > 64:
                self._solvers.clear()
            solver = SimplexSolver(self.model.extended_lp(objective))
            self._solvers[key] = solver
        return solver

    def _lp(self, solver, lower, upper, basis):
        self._lp_solves += 1
        act = self.model.row_activity(lower)
        if basis is None:
            return solver.solve(lower, upper, act)
        return solver.resolve_with_bounds(lower, upper, act, basis=basis)

    def solve(self, objective, lower=None, upper=None, cutoff: Optional[float] = None) -> MilpSolution:
        model = self.model
        n = model.n_vars
        objective = np.asarray(objective, dtype=float)
        if objective.shape[0] != n:
            raise ValueError("objective length does not match the model")
        lower = model.base.lower.copy() if lower is None else np.array(lower, dtype=float)
        upper = model.base.upper.copy() if upper is None else np.array(upper, dtype=float)
        if lower.shape[0] != n or upper.shape[0] != n:
            raise ValueError("bound vectors must match the model dimension")
        mask = model.int_mask
        lower[mask] = np.ceil(lower[mask] - INT_TOL)
        upper[mask] = np.floor(upper[mask] + INT_TOL)
        if np.any(lower > upper + 1e-12):
            return MilpSolution(MilpStatus.INFEASIBLE)

        simplex = self._simplex_for(objective)
        best_val = math.inf if cutoff is None else float(cutoff)
        best_x: Optional[np.ndarray] = None
        scale = 1e-9 * max(1.0, float(np.abs(objective).sum()))
        counter = 0
        heap: list[_Node] = []
        nodes = 0

        def evaluate(lo, hi, basis):
            nonlocal best_val, best_x, counter, nodes
            nodes += 1
            sol = self._lp(simplex, lo, hi, basis)
            if sol.status != LpStatus.OPTIMAL or sol.value >= best_val - scale:
                return
            x = sol.point
            if self._integral(x):
                xr = self._snap(x)
                best_val, best_x = float(objective @ xr), xr
                return
            probe = self._round_probe(x, lo, hi, objective)
            if probe is not None and probe[0] < best_val - scale:
                best_val, best_x = probe
            heapq.heappush(heap, _Node(sol.value, counter, lo, hi, x, simplex.snapshot(), sol.reduced_costs))
            counter += 1

        evaluate(lower, upper, None)
        while heap:
            node = heapq.heappop(heap)
            if node.bound >= best_val - scale:
                break
            if np.isfinite(best_val) and node.reduced_costs is not None:
                self._fix_by_reduced_cost(node, best_val - scale)
            j, kind = self._branch_choice(node.point)
            x = node.point
            if kind == "frac":
                down_hi = node.upper.copy()
                down_hi[j] = math.floor(x[j])
                up_lo = node.lower.copy()
                up_lo[j] = math.ceil(x[j])
            else:
                down_hi = node.upper.copy()
                down_hi[j] = 0.0
                up_lo = node.lower.copy()
                up_lo[j] = 1.0
            if node.lower[j] <= down_hi[j]:
                evaluate(node.lower, down_hi, node.basis)
            if up_lo[j] <= node.upper[j]:
                evaluate(up_lo, node.upper, node.basis)

        if best_x is None:
            return MilpSolution(MilpStatus.INFEASIBLE, nodes=nodes)
        return MilpSolution(MilpStatus.OPTIMAL, best_x, best_val, nodes)

    # -- helpers --------------------------------------------------------------

    def _integral(self, x) -> bool:
        xi = x[self.model.int_mask]
        if np.any(np.abs(xi - np.round(xi)) > INT_TOL):
            return False
        return not self.model.indicator_violations(self._snap(x))

    def _snap(self, x) -> np.ndarray:
        x = x.copy()
        mask = self.model.int_mask
        x[mask] = np.round(x[mask])
        return x

    def _branch_choice(self, x) -> tuple[int, str]:
        best_j, best_f = -1, INT_TOL
        for j in self.model.integer_indices:
            f = x[j] - math.floor(x[j])
            f = min(f, 1.0 - f)
            if f > best_f + 1e-12 or (abs(f - best_f) <= 1e-12 and best_j >= 0 and j < best_j):
                best_j, best_f = j, f
        if best_j >= 0:
            return best_j, "frac"
        viol = self.model.indicator_violations(self._snap(x))
        return min(viol), "indicator"

    def _fix_by_reduced_cost(self, node: _Node, target: float) -> None:
        """Shrink integer bounds that cannot lead below ``target``.

        For the node LP, ``<c, x> >= bound + d_j (x_j - xbar_j)`` on every
        feasible point, so moving ``x_j`` more than ``(target - bound) / |d_j|``
        away from its nonbasic value cannot beat the incumbent.
        """
        slack = target - node.bound
        d = node.reduced_costs
        lo, hi = node.lower.copy(), node.upper.copy()
        for j in self.model.integer_indices:
            if d[j] > 1e-9 and abs(node.point[j] - lo[j]) <= INT_TOL:
                hi[j] = min(hi[j], lo[j] + math.floor(slack / d[j] + 1e-9))
            elif d[j] < -1e-9 and abs(node.point[j] - hi[j]) <= INT_TOL:
                lo[j] = max(lo[j], hi[j] - math.floor(slack / -d[j] + 1e-9))
        node.lower, node.upper = lo, hi

    def _round_probe(self, x, lo, hi, objective):
        """Try nearest, floor and ceiling rounding of the integer part."""
        mask = self.model.int_mask
        best = None
        for rounding in (np.round, np.floor, np.ceil):
            xr = x.copy()
            xr[mask] = rounding(x[mask] + (0.0 if rounding is np.round else
                                           (INT_TOL if rounding is np.floor else -INT_TOL)))
            xr = np.minimum(np.maximum(xr, lo), hi)
            if self.model.is_feasible(xr, lo, hi):
                val = float(objective @ xr)
                if best is None or val < best[0]:
                    best = (val, xr)
        return best


def solve_milp(model: MilpModel, objective, lower=None, upper=None, cutoff=None,
               solver: Optional[MilpSolver] = None) -> MilpSolution:
    """Exact optimum of ``min <objective, x>`` over the model within ``[lower, upper]``."""
    solver = MilpSolver(model) if solver is None else solver
    return solver.solve(objective, lower, upper, cutoff)
