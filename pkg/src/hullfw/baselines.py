"""Comparison solvers: outer approximation and a box-relaxation branch-and-bound.

``solve_oa`` minimizes an epigraph variable over the internal MILP with one
gradient cut per round.  ``solve_nlp_bnb`` is classic nonlinear
branch-and-bound whose nodes solve the continuous relaxation with
Frank-Wolfe over ``relaxed_lmo``.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .blmo import BoundState, Infeasible, fractional_indices
from .bpcg import ActiveSet, solve_node
from .milp import Indicator, MilpModel, MilpSolver, MilpStatus
from .problems import ProblemInstance
from .runlog import RunLog
from .simplex import LinearProgram
from .tree import FRAC_TOL, SolveOutcome, Status


@dataclass
class OaState:
    epigraph_var: int
    cut_rows: list[tuple[np.ndarray, float]] = field(default_factory=list)
    incumbent: Optional[np.ndarray] = None

    def add_cut(self, objective, x) -> None:
        """Row ``<grad, x> - t <= <grad, x_k> - f(x_k)``, i.e. ``t >= f(x_k) + <grad, x - x_k>``."""
        g = objective.gradient(x)
        a = np.append(g, -1.0)
        self.cut_rows.append((a, float(g @ x - objective.value(x))))


def _epigraph_model(base: MilpModel, state: OaState, t_lower: float, t_upper: float) -> MilpModel:
    lp = base.base
    n = lp.n_vars
    A_old = np.hstack([lp.A, np.zeros((lp.n_rows, 1))])
    A_cuts = np.vstack([a for a, _ in state.cut_rows])
    A = np.vstack([A_old, A_cuts])
    senses = tuple(lp.senses) + ("<=",) * len(state.cut_rows)
    rhs = np.concatenate([lp.rhs, [r for _, r in state.cut_rows]])
    lower = np.append(lp.lower, t_lower)
    upper = np.append(lp.upper, t_upper)
    inds = [Indicator(ind.z, np.append(ind.coeffs, 0.0), ind.rhs) for ind in base.indicators]
    return MilpModel(LinearProgram(np.zeros(n + 1), A, senses, rhs, lower, upper), base.integer_indices, inds)


def solve_oa(instance: ProblemInstance, tolerance: float = 1e-6, max_rounds: int = 200,
             time_limit: Optional[float] = None) -> SolveOutcome:
    """Kelley-style outer approximation on the epigraph MILP."""
    start = time.monotonic()
    log = RunLog({"instance": instance.name, "solver": "oa", "tolerance": tolerance})
    f, region = instance.objective, instance.region
    base = region.milp_model()
    n = instance.dimension
    lmo_calls = 1
    nodes = 0
    try:
        x0 = region.lmo(instance.global_bounds, np.zeros(n))
    except Infeasible:
        log.finish(status=Status.INFEASIBLE.value, primal=math.inf, dual=math.inf, nodes=0, lmo_calls=1,
                   wall_seconds=time.monotonic() - start)
        return SolveOutcome(Status.INFEASIBLE, None, math.inf, math.inf, 0, 1, log)
    state = OaState(n)
    state.incumbent, ub = x0, f.value(x0)
    state.add_cut(f, x0)
    # first cut minimized over the box bounds t from below
    g0 = f.gradient(x0)
    lo, hi = region.lower, region.upper
    t_lower = float(f.value(x0) + np.where(g0 > 0, g0 * (lo - x0), g0 * (hi - x0)).sum()) - 1.0
    t_upper = ub + 1.0
    lb = t_lower
    status = Status.GAP_LIMIT
    c = np.zeros(n + 1)
    c[n] = 1.0
    for rnd in range(max_rounds):
        if time_limit is not None and time.monotonic() - start > time_limit:
            status = Status.TIME_LIMIT
            break
        sol = MilpSolver(_epigraph_model(base, state, t_lower, t_upper)).solve(c)
        lmo_calls += 1
        nodes += sol.nodes
        if sol.status != MilpStatus.OPTIMAL:
            break
        xk, tk = sol.point[:n], float(sol.point[n])
        lb = max(lb, tk)
        fk = f.value(xk)
        if fk < ub:
            ub, state.incumbent = fk, xk.copy()
            log.event("incumbent", round=rnd, value=ub)
        log.event("iteration", round=rnd, lb=lb, ub=ub)
        if ub - lb <= tolerance:
            status = Status.OPTIMAL
            break
        state.add_cut(f, xk)
    lb = min(lb, ub)
    log.finish(status=status.value, primal=ub, dual=lb, nodes=nodes, lmo_calls=lmo_calls,
               wall_seconds=time.monotonic() - start)
    return SolveOutcome(status, state.incumbent, ub, lb, nodes, lmo_calls, log)


@dataclass(order=True)
class _BoxNode:
    bound: float
    node_id: int
    bounds: BoundState = field(compare=False)
    start: np.ndarray = field(compare=False)


def solve_nlp_bnb(instance: ProblemInstance, tolerance: float = 1e-6, node_limit: Optional[int] = None,
                  time_limit: Optional[float] = None) -> SolveOutcome:
    """Best-bound branch-and-bound over the continuous relaxation."""
    start_time = time.monotonic()
    deadline = None if time_limit is None else start_time + time_limit
    log = RunLog({"instance": instance.name, "solver": "nlp-bnb", "tolerance": tolerance})
    f, region = instance.objective, instance.region
    n = instance.dimension
    ub, incumbent = math.inf, None
    closed = math.inf
    heap = [_BoxNode(-math.inf, 0, instance.global_bounds, np.zeros(n))]
    next_id, nodes, lmo_calls = 1, 0, 0
    status = Status.OPTIMAL
    eps = tolerance / 2.0
    while heap:
        lb = min(heap[0].bound, closed, ub)
        log.event("iteration", lb=lb, ub=ub, open=len(heap), nodes=nodes)
        if ub - lb <= tolerance:
            break
        if node_limit is not None and nodes >= node_limit:
            status = Status.NODE_LIMIT
            break
        if deadline is not None and time.monotonic() > deadline:
            status = Status.TIME_LIMIT
            break
        node = heapq.heappop(heap)
        if node.bound >= ub - tolerance:
            closed = min(closed, node.bound) if node.bound < ub else closed
            continue
        nodes += 1
        try:
            v0 = region.relaxed_lmo(node.bounds, f.gradient(node.start))
            res = solve_node(f, region, node.bounds, ActiveSet.single(v0), None, eps, relaxed=True,
                             use_shadow=False, deadline=deadline)
        except Infeasible:
            log.event("node", id=node.node_id, status="infeasible")
            continue
        lmo_calls += res.lmo_calls + 1
        x = res.iterate
        bound = max(node.bound, res.dual_bound)
        log.event("node", id=node.node_id, status="solved", f=res.value, g=res.certified_gap, bound=bound)
        if bound >= ub - tolerance:
            closed = min(closed, bound) if bound < ub else closed
            continue
        frac = fractional_indices(region, x, FRAC_TOL)
        if frac:
            j = max(frac, key=lambda k: (min(x[k] - math.floor(x[k]), math.ceil(x[k]) - x[k]), -k))
            down, up = math.floor(x[j]), math.ceil(x[j])
        else:
            xr = x.copy()
            xr[region.int_mask] = np.round(xr[region.int_mask])
            viol = region.indicator_violations(xr)
            if not viol:
                if region.is_integer_feasible(node.bounds, xr):
                    val = f.value(xr)
                    if val < ub:
                        ub, incumbent = val, xr
                        log.event("incumbent", node=node.node_id, value=ub)
                closed = min(closed, bound)
                continue
            j = min(viol)
            down, up = 0.0, 1.0
        for side in ("down", "up"):
            b = node.bounds.copy()
            if side == "down":
                b.upper[j] = down
            else:
                b.lower[j] = up
            if b.lower[j] > b.upper[j]:
                continue
            heapq.heappush(heap, _BoxNode(bound, next_id, b, x.copy()))
            next_id += 1
    dual = min(heap[0].bound if heap else math.inf, closed, ub)
    if incumbent is None and status == Status.OPTIMAL:
        status = Status.INFEASIBLE
    elif status == Status.OPTIMAL and ub - dual > tolerance:
        status = Status.GAP_LIMIT
    log.finish(status=status.value, primal=ub, dual=dual, nodes=nodes, lmo_calls=lmo_calls,
               wall_seconds=time.monotonic() - start_time)
    return SolveOutcome(status, incumbent, ub, dual, nodes, lmo_calls, log)
