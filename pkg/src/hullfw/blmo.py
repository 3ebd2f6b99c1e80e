"""Boundable linear minimization oracles.

A feasible region answers ``argmin <d, v>`` over its points inside local
bounds ``[l, u]``.  Three region kinds exist: an integer box with a closed-form
answer, a budget set ``{<c, x> <= b}`` and a generic MILP-described region.
Both of the latter delegate to :class:`hullfw.milp.MilpSolver`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numba
import numpy as np

from .milp import INT_TOL, Indicator, MilpModel, MilpSolver, MilpStatus
from .simplex import LinearProgram, LpStatus, SimplexSolver

FEAS_TOL = 1e-6


class Infeasible(Exception):
    """The region intersected with the local bounds is empty."""


@dataclass
class BoundState:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float).copy()
        self.upper = np.asarray(self.upper, dtype=float).copy()
        if self.lower.shape != self.upper.shape:
            raise ValueError("bound vectors differ in length")

    def copy(self) -> "BoundState":
        return BoundState(self.lower, self.upper)

    @property
    def empty(self) -> bool:
        return bool(np.any(self.lower > self.upper))

    def contains(self, x, tol: float = FEAS_TOL) -> bool:
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def intersect(self, other: "BoundState") -> "BoundState":
        return BoundState(np.maximum(self.lower, other.lower), np.minimum(self.upper, other.upper))

    def subset_of(self, other: "BoundState") -> bool:
        return bool(np.all(self.lower >= other.lower) and np.all(self.upper <= other.upper))


class FeasibleRegion:
    """Base class.  ``lower``/``upper`` are the global bounds, ``integer_indices`` is J."""

    kind = "abstract"

    def __init__(self, lower, upper, integer_indices: Sequence[int]):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.integer_indices = tuple(sorted(int(j) for j in integer_indices))
        n = self.lower.shape[0]
        if self.upper.shape[0] != n:
            raise ValueError("bound vectors differ in length")
        if np.any(self.lower > self.upper):
            raise ValueError("global bounds are crossed")
        if any(j < 0 or j >= n for j in self.integer_indices):
            raise ValueError("integer index out of range")
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            raise ValueError("regions must be compact: finite global bounds required")
        ji = list(self.integer_indices)
        if np.any(self.lower[ji] != np.round(self.lower[ji])) or np.any(self.upper[ji] != np.round(self.upper[ji])):
            raise ValueError("integer variables need integral bounds")
        self.int_mask = np.zeros(n, dtype=bool)
        self.int_mask[ji] = True
        self._milp: Optional[MilpSolver] = None
        self._lp_solvers: dict = {}

    @property
    def dimension(self) -> int:
        return self.lower.shape[0]

    def global_bounds(self) -> BoundState:
        return BoundState(self.lower, self.upper)

    def milp_model(self) -> MilpModel:
        raise NotImplementedError

    def _solver(self) -> MilpSolver:
        if self._milp is None:
            self._milp = MilpSolver(self.milp_model())
        return self._milp

    def lmo(self, bounds: BoundState, direction: np.ndarray) -> np.ndarray:
        sol = self._solver().solve(direction, bounds.lower, bounds.upper)
        if sol.status != MilpStatus.OPTIMAL:
            raise Infeasible("no integer-feasible point inside the local bounds")
        return sol.point

    def relaxed_lmo(self, bounds: BoundState, direction: np.ndarray) -> np.ndarray:
        model = self.milp_model()
        if bounds.empty:
            raise Infeasible("crossed bounds")
        lp = model.extended_lp(np.asarray(direction, dtype=float))
        sol = SimplexSolver(lp).solve(bounds.lower, bounds.upper, model.row_activity(bounds.lower))
        if sol.status != LpStatus.OPTIMAL:
            raise Infeasible("continuous relaxation is empty")
        return sol.point

    def is_integer_feasible(self, bounds: BoundState, x: np.ndarray) -> bool:
        if not bounds.contains(x):
            return False
        return self.milp_model().is_feasible(x, bounds.lower - FEAS_TOL, bounds.upper + FEAS_TOL, FEAS_TOL)

    def indicator_violations(self, x) -> list[int]:
        return self.milp_model().indicator_violations(x, FEAS_TOL)

    def monotone_in(self, j: int, direction: str) -> bool:
        """True when moving ``x_j`` of any feasible point to its lower (``"down"``)
        or upper (``"up"``) local bound keeps it feasible.

        Dual tightening relies on this exchange: it bounds the other
        coordinates of a point with ``x_j`` away from the bound by the gap.
        """
        model = self.milp_model()
        sign = 1.0 if direction == "down" else -1.0
        lp = model.base
        for i in range(lp.n_rows):
            a = sign * lp.A[i, j]
            if a == 0.0:
                continue
            sense = lp.senses[i]
            if sense == "=" or (sense == "<=" and a < 0) or (sense == ">=" and a > 0):
                return False
        for ind in model.indicators:
            if ind.z == j and direction == "up":
                return False
            if sign * ind.coeffs[j] < 0:
                return False
        return True

    def lp_solve_count(self) -> int:
        return 0 if self._milp is None else self._milp.count_lp_solves()

    def to_dict(self) -> dict:
        raise NotImplementedError


class IntegerBox(FeasibleRegion):
    """``X = [lower, upper] ∩ Z_J``; the oracle is solved coordinate-wise."""

    kind = "integer_box"

    def milp_model(self) -> MilpModel:
        n = self.dimension
        lp = LinearProgram(np.zeros(n), np.zeros((0, n)), (), np.zeros(0), self.lower, self.upper)
        return MilpModel(lp, self.integer_indices)

    def lmo(self, bounds, direction):
        lo, hi = bounds.lower.copy(), bounds.upper.copy()
        lo[self.int_mask] = np.ceil(lo[self.int_mask] - INT_TOL)
        hi[self.int_mask] = np.floor(hi[self.int_mask] + INT_TOL)
        if np.any(lo > hi):
            raise Infeasible("crossed bounds")
        return np.where(np.asarray(direction) < 0, hi, lo)

    def relaxed_lmo(self, bounds, direction):
        if bounds.empty:
            raise Infeasible("crossed bounds")
        return np.where(np.asarray(direction) < 0, bounds.upper, bounds.lower).astype(float)

    def is_integer_feasible(self, bounds, x):
        if not bounds.contains(x):
            return False
        xi = x[self.int_mask]
        return bool(np.all(np.abs(xi - np.round(xi)) <= FEAS_TOL))

    def indicator_violations(self, x):
        return []

    def monotone_in(self, j, direction):
        return True

    def to_dict(self):
        return {"kind": self.kind}


class Budget(FeasibleRegion):
    """``{x : <c, x> <= b} ∩ [lower, upper] ∩ Z_J``."""

    kind = "budget"

    def __init__(self, cost, budget: float, lower, upper, integer_indices):
        super().__init__(lower, upper, integer_indices)
        self.cost = np.asarray(cost, dtype=float)
        if self.cost.shape[0] != self.dimension:
            raise ValueError("cost vector has the wrong length")
        self.budget = float(budget)
        self._model: Optional[MilpModel] = None

    def milp_model(self) -> MilpModel:
        if self._model is None:
            lp = LinearProgram(np.zeros(self.dimension), self.cost[None, :], ("<=",),
                               np.array([self.budget]), self.lower, self.upper)
            self._model = MilpModel(lp, self.integer_indices)
        return self._model

    def lmo(self, bounds, direction):
        if np.any(self.cost <= 0):
            return super().lmo(bounds, direction)
        x = knapsack_lmo(self.cost, self.budget, bounds.lower, bounds.upper, self.int_mask,
                         np.asarray(direction, dtype=float))
        if x is None:
            raise Infeasible("no integer-feasible point inside the local bounds")
        return x

    def relaxed_lmo(self, bounds, direction):
        if np.any(self.cost <= 0):
            return super().relaxed_lmo(bounds, direction)
        if bounds.empty:
            raise Infeasible("crossed bounds")
        x = knapsack_lmo(self.cost, self.budget, bounds.lower, bounds.upper, np.zeros(self.dimension, dtype=bool),
                         np.asarray(direction, dtype=float))
        if x is None:
            raise Infeasible("continuous relaxation is empty")
        return x

    def to_dict(self):
        return {"kind": self.kind, "cost": self.cost.tolist(), "budget": self.budget}


@numba.njit(cache=True)
def _knapsack_dfs(p, w, cnt, is_int, cap, tol):  # pragma: no cover - compiled
    """Iterative depth-first search; returns the take count per item.

    Items arrive in ratio order.  Integer items are branched on in that
    order; the bound at depth ``k`` fills every still-open item (integer items
    past ``k`` and all continuous items) greedily.  Continuous items are filled
    last, greedily, once the integer part is fixed.
    """
    m = p.shape[0]
    ints = np.empty(m, dtype=np.int64)
    rank = np.full(m, -1, dtype=np.int64)
    n_int = 0
    for i in range(m):
        if is_int[i]:
            ints[n_int] = i
            rank[i] = n_int
            n_int += 1
    eps = 0.0
    for i in range(m):
        eps += p[i] * cnt[i]
    eps = tol * max(1.0, eps)
    take = np.zeros(m)
    best_take = np.zeros(m)
    best = -1.0
    t_cur = np.zeros(n_int + 1, dtype=np.int64)
    room = cap
    profit = 0.0
    level = 0
    descend = True
    while True:
        if descend:
            # fractional bound over open items
            r = room
            val = 0.0
            for i in range(m):
                if r <= 0.0:
                    break
                if 0 <= rank[i] < level:
                    continue
                t = min(cnt[i], r / w[i])
                val += t * p[i]
                r -= t * w[i]
            if profit + val > best + eps:
                if level == n_int:
                    best = profit + val
                    for i in range(m):
                        best_take[i] = take[i]
                else:
                    i = ints[level]
                    t_max = min(cnt[i], np.floor((room + tol) / w[i]))
                    t_cur[level] = int(t_max)
                    take[i] = t_cur[level]
                    room -= take[i] * w[i]
                    profit += take[i] * p[i]
                    level += 1
                    continue
        # backtrack to the deepest level that still has a smaller choice
        descend = True
        moved = False
        while level > 0:
            level -= 1
            i = ints[level]
            room += take[i] * w[i]
            profit -= take[i] * p[i]
            if t_cur[level] > 0:
                t_cur[level] -= 1
                take[i] = t_cur[level]
                room -= take[i] * w[i]
                profit += take[i] * p[i]
                level += 1
                moved = True
                break
            take[i] = 0.0
        if not moved:
            break
    return best_take


def knapsack_lmo(cost, budget, lower, upper, int_mask, d, tol=1e-9) -> Optional[np.ndarray]:
    """Exact ``argmin <d, x>`` over ``{<cost, x> <= budget, l <= x <= u, x_J integral}``.

    Requires ``cost > 0``.  Only items with negative ``d`` are worth raising
    above their lower bound; those are searched by branch-and-bound with the
    greedy fractional bound.
    """
    lo = np.asarray(lower, dtype=float).copy()
    hi = np.asarray(upper, dtype=float).copy()
    lo[int_mask] = np.ceil(lo[int_mask] - INT_TOL)
    hi[int_mask] = np.floor(hi[int_mask] + INT_TOL)
    if np.any(lo > hi):
        return None
    cap = budget - float(cost @ lo)
    if cap < -FEAS_TOL:
        return None
    x = lo.copy()
    gain = np.where(d < 0, -d, 0.0)
    items = np.flatnonzero((gain > 0) & (hi > lo))
    if items.size == 0:
        return x
    ratio = gain[items] / cost[items]
    items = items[np.lexsort((items, -ratio))]
    take = _knapsack_dfs(gain[items], cost[items], hi[items] - lo[items], int_mask[items], max(cap, 0.0), tol)
    # continuous items still need their greedy fill once the integer part is fixed
    room = max(cap, 0.0) - float(take[int_mask[items]] @ cost[items][int_mask[items]])
    for k, j in enumerate(items):
        if int_mask[j]:
            x[j] += take[k]
        else:
            t = max(0.0, min(hi[j] - lo[j], room / cost[j]))
            x[j] += t
            room -= t * cost[j]
    return x


class GenericMilp(FeasibleRegion):
    """Region described by linear rows plus indicator rows on binaries."""

    kind = "milp"

    def __init__(self, model: MilpModel):
        super().__init__(model.base.lower, model.base.upper, model.integer_indices)
        self.model = model

    def milp_model(self) -> MilpModel:
        return self.model

    def to_dict(self):
        lp = self.model.base
        return {
            "kind": self.kind,
            "rows": [{"coeffs": lp.A[i].tolist(), "sense": lp.senses[i], "rhs": float(lp.rhs[i])}
                     for i in range(lp.n_rows)],
            "indicators": [{"z": ind.z, "coeffs": np.asarray(ind.coeffs).tolist(), "rhs": float(ind.rhs)}
                           for ind in self.model.indicators],
        }


def region_from_dict(data: dict, lower, upper, integer_indices) -> FeasibleRegion:
    kind = data["kind"]
    if kind == "integer_box":
        return IntegerBox(lower, upper, integer_indices)
    if kind == "budget":
        return Budget(data["cost"], data["budget"], lower, upper, integer_indices)
    if kind == "milp":
        n = len(lower)
        rows = [(r["coeffs"], r["sense"], r["rhs"]) for r in data.get("rows", [])]
        lp = LinearProgram.from_rows(np.zeros(n), rows, lower, upper)
        inds = [Indicator(int(d["z"]), np.asarray(d["coeffs"], dtype=float), float(d["rhs"]))
                for d in data.get("indicators", [])]
        return GenericMilp(MilpModel(lp, integer_indices, inds))
    raise ValueError(f"unknown region kind {kind!r}")


# Functional entry points -------------------------------------------------------

def lmo(region: FeasibleRegion, bounds: BoundState, direction) -> np.ndarray:
    """Minimizer of ``<direction, v>`` over ``X ∩ [l, u]``; raises :class:`Infeasible`."""
    return region.lmo(bounds, np.asarray(direction, dtype=float))


def relaxed_lmo(region: FeasibleRegion, bounds: BoundState, direction) -> np.ndarray:
    """Same over the continuous relaxation; the answer need not be integral."""
    return region.relaxed_lmo(bounds, np.asarray(direction, dtype=float))


def is_integer_feasible(region: FeasibleRegion, bounds: BoundState, x) -> bool:
    return region.is_integer_feasible(bounds, np.asarray(x, dtype=float))


def fractional_indices(region: FeasibleRegion, x, tol: float = INT_TOL) -> list[int]:
    return [j for j in region.integer_indices if abs(x[j] - round(x[j])) > tol]
