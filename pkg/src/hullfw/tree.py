"""Branch-and-bound over the integer hull.

Each node minimizes the objective over the convex hull of the integer-feasible
points inside its bounds with lazy BPCG; the certified Frank-Wolfe gap gives
the node dual bound.  Children inherit the parent's vertices, split by the
branching variable.
"""

from __future__ import annotations

import enum
import heapq
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .blmo import BoundState, Infeasible, fractional_indices
from .bpcg import ActiveSet, NodeSolveResult, ShadowSet, Termination, solve_node
from .problems import ProblemInstance
from .runlog import RunLog
from .tightening import (TighteningContext, global_tightening, rounding_distance_sq, sharpness_node_bound,
                         strong_convexity_node_bound, tighten_bounds)

FRAC_TOL = 1e-6


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    GAP_LIMIT = "GapLimit"
    NODE_LIMIT = "NodeLimit"
    TIME_LIMIT = "TimeLimit"
    INFEASIBLE = "Infeasible"


@dataclass(frozen=True)
class MostFractional:
    pass


@dataclass(frozen=True)
class PartialStrong:
    """Score candidates with ``iters`` relaxed BPCG iterations per child."""

    iters: int = 10
    eps: float = 1e-3


@dataclass(frozen=True)
class Hybrid:
    """Partial strong branching above depth ``|J| / divisor``, most fractional below."""

    divisor: float = 2.0
    iters: int = 10
    eps: float = 1e-3


Branching = Union[MostFractional, PartialStrong, Hybrid]


@dataclass
class SolverConfig:
    abs_gap_tolerance: float = 1e-6
    rel_gap_tolerance: float = 1e-4
    eps0: float = 1e-2
    rho: float = 0.9
    eps_min: Optional[float] = None
    branching: Branching = field(default_factory=MostFractional)
    laziness_K: float = 2.0
    tree_state_threshold: Optional[int] = None
    use_local_tightening: bool = True
    use_global_tightening: bool = True
    use_strong_convexity: bool = True
    use_shadow_set: bool = True
    use_warm_start: bool = True
    assume_unique_optimum: bool = False
    node_limit: Optional[int] = None
    time_limit: Optional[float] = None
    certify: bool = True
    max_bpcg_iterations: int = 10_000
    trace_iterations: bool = False

    def __post_init__(self):
        if self.abs_gap_tolerance <= 0:
            raise ValueError("abs_gap_tolerance must be positive")
        if self.eps_min is None:
            self.eps_min = min(self.abs_gap_tolerance / 2.0, self.eps0)
        if not (0 < self.rho <= 1):
            raise ValueError("rho must lie in (0, 1]")
        if self.eps_min <= 0 or self.eps_min > self.eps0:
            raise ValueError("need 0 < eps_min <= eps0")

    def node_tolerance(self, depth: int) -> float:
        return max(self.eps0 * self.rho ** depth, self.eps_min)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "branching"}
        b = self.branching
        out["branching"] = {"kind": type(b).__name__, **{k: getattr(b, k) for k in b.__dataclass_fields__}}
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SolverConfig":
        data = dict(data)
        b = data.pop("branching", None)
        if isinstance(b, dict):
            b = dict(b)
            kind = b.pop("kind", "MostFractional")
            data["branching"] = {"MostFractional": MostFractional, "PartialStrong": PartialStrong,
                                 "Hybrid": Hybrid}[kind](**b)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class Node:
    id: int
    bounds: BoundState
    warm_active: Optional[ActiveSet]
    warm_shadow: ShadowSet
    inherited_gap: float
    dual_bound: float
    depth: int
    parent_iterate: Optional[np.ndarray] = None

    def __lt__(self, other: "Node") -> bool:
        return (self.dual_bound, self.id) < (other.dual_bound, other.id)


@dataclass
class SolveOutcome:
    status: Status
    incumbent: Optional[np.ndarray]
    primal: float
    dual: float
    nodes_processed: int
    total_lmo_calls: int
    log: RunLog

    @property
    def gap(self) -> float:
        return self.primal - self.dual


def partition_vertices(active: ActiveSet, shadow: ShadowSet, j: int, split: tuple[float, float]):
    """Split vertices by ``v_j <= floor_val`` versus ``v_j >= ceil_val``."""
    floor_val, ceil_val = split
    left = ([], [])
    right = ([], [])
    for v, w in zip(active.vertices, active.weights):
        if v[j] <= floor_val + FRAC_TOL:
            left[0].append(v)
            left[1].append(w)
        elif v[j] >= ceil_val - FRAC_TOL:
            right[0].append(v)
            right[1].append(w)
        else:
            raise AssertionError(f"vertex coordinate {v[j]} lies strictly inside the split")
    assert left[0] and right[0], "branching on a variable that does not split the active set"

    def make(side):
        total = sum(side[1])
        return ActiveSet(side[0], [w / total for w in side[1]])

    s_left = ShadowSet([v for v in shadow.vertices if v[j] <= floor_val + FRAC_TOL])
    s_right = ShadowSet([v for v in shadow.vertices if v[j] >= ceil_val - FRAC_TOL])
    return (make(left), s_left), (make(right), s_right)


def tree_state_probe(open_nodes: Sequence[Node], current_dual: float, threshold: int) -> bool:
    """Stop the node solve once ``threshold`` open nodes have a lower bound below ``current_dual``."""
    count = 0
    for n in open_nodes:
        if n.dual_bound < current_dual:
            count += 1
            if count >= threshold:
                return True
    return False


def _most_fractional(x_hat, J) -> int:
    best_j, best_f = -1, FRAC_TOL
    for j in sorted(J):
        f = x_hat[j] - math.floor(x_hat[j])
        f = min(f, 1.0 - f)
        if f > best_f + 1e-12:
            best_j, best_f = j, f
    return best_j


def _relaxed_child_bound(instance: ProblemInstance, bounds: BoundState, start, iters: int, eps: float) -> float:
    try:
        v0 = instance.region.relaxed_lmo(bounds, instance.objective.gradient(start))
        res = solve_node(instance.objective, instance.region, bounds, ActiveSet.single(v0), None, eps,
                         relaxed=True, max_iterations=iters, use_shadow=False)
    except Infeasible:
        return math.inf
    return res.dual_bound


def select_branch_variable(x_hat, J: Sequence[int], strategy: Branching = MostFractional(),
                           context: Optional[dict] = None) -> int:
    """Pick the branching variable among fractional ``J`` coordinates.

    ``context`` carries ``instance``, ``bounds`` and ``depth`` for the strong
    branching strategies.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    cands = [j for j in sorted(J) if abs(x_hat[j] - round(x_hat[j])) > FRAC_TOL]
    if not cands:
        raise ValueError("no fractional integer variable to branch on")
    if len(cands) == 1 or isinstance(strategy, MostFractional):
        return _most_fractional(x_hat, cands)
    if isinstance(strategy, Hybrid):
        depth = 0 if context is None else context.get("depth", 0)
        if depth >= len(J) / strategy.divisor:
            return _most_fractional(x_hat, cands)
    if context is None or "instance" not in context:
        raise ValueError("strong branching needs the instance and node bounds in context")
    instance, bounds = context["instance"], context["bounds"]
    best_j, best_score = -1, -math.inf
    for j in cands:
        left = bounds.copy()
        left.upper[j] = math.floor(x_hat[j])
        right = bounds.copy()
        right.lower[j] = math.ceil(x_hat[j])
        score = min(_relaxed_child_bound(instance, left, x_hat, strategy.iters, strategy.eps),
                    _relaxed_child_bound(instance, right, x_hat, strategy.iters, strategy.eps))
        if score > best_score + 1e-12:
            best_j, best_score = j, score
    return best_j


class _Search:
    """State of one tree search; ``solve`` drives it."""

    def __init__(self, instance: ProblemInstance, config: SolverConfig, log: RunLog):
        self.inst = instance
        self.cfg = config
        self.log = log
        self.f = instance.objective
        self.region = instance.region
        self.J = list(instance.integer_indices)
        self.gbounds = instance.global_bounds
        self.start = time.monotonic()
        self.deadline = None if config.time_limit is None else self.start + config.time_limit
        self.ub = math.inf
        self.incumbent: Optional[np.ndarray] = None
        self.closed_bound = math.inf  # min bound over nodes removed without an incumbent proof
        self.heap: list[Node] = []
        self.nodes = 0
        self.lmo_calls = 0
        self.next_id = 0
        self.root_ctx: Optional[TighteningContext] = None
        self.root_x: Optional[np.ndarray] = None
        self.mu = instance.objective.strong_convexity_mu if config.use_strong_convexity else None

    # -- bookkeeping -------------------------------------------------------------

    def prune_tol(self) -> float:
        return max(self.cfg.abs_gap_tolerance, self.cfg.rel_gap_tolerance * abs(self.ub)) \
            if math.isfinite(self.ub) else 0.0

    def lower_bound(self) -> float:
        lb = min(self.closed_bound, self.ub)
        if self.heap:
            lb = min(lb, self.heap[0].dual_bound)
        return lb

    def offer(self, v, value: Optional[float] = None, node_id: int = -1) -> bool:
        value = self.f.value(v) if value is None else value
        if value < self.ub - 1e-12 and self.region.is_integer_feasible(self.gbounds, v):
            self.ub = float(value)
            self.incumbent = np.array(v, dtype=float)
            self.log.event("incumbent", node=node_id, value=self.ub)
            if self.cfg.use_global_tightening and self.root_ctx is not None:
                self._global_tighten()
            return True
        return False

    def _global_tighten(self):
        events = []
        new = global_tightening(self.root_ctx, self.root_x, self.ub, self.gbounds, self.J, self.region,
                                events, self.mu is not None)
        for e in events:
            self.log.event("tightening", node=-1, scope="global", **e.to_dict())
        self.gbounds = new

    def push(self, node: Node):
        heapq.heappush(self.heap, node)

    def close(self, node: Node, bound: float, reason: str):
        """Remove a node whose integer points are all bounded below by ``bound``."""
        if bound < self.ub:
            self.closed_bound = min(self.closed_bound, bound)
        self.log.event("node", id=node.id, depth=node.depth, status=reason, bound=bound)

    # -- node processing ---------------------------------------------------------

    def warm_sets(self, node: Node, bounds: BoundState):
        """Vertices of the warm start compatible with ``bounds``; ``None`` when none remain."""
        active = None
        if node.warm_active is not None:
            keep = [(v, w) for v, w in zip(node.warm_active.vertices, node.warm_active.weights)
                    if bounds.contains(v, 1e-9)]
            if keep:
                total = sum(w for _, w in keep)
                active = ActiveSet([v for v, _ in keep], [w / total for _, w in keep])
        shadow = ShadowSet([v for v in node.warm_shadow.vertices if bounds.contains(v, 1e-9)])
        return active, shadow

    def start_vertex(self, node: Node, bounds: BoundState) -> np.ndarray:
        x = node.parent_iterate
        d = np.zeros(self.inst.dimension) if x is None else self.f.gradient(x)
        self.lmo_calls += 1
        return self.region.lmo(bounds, d)

    def run_bpcg(self, node: Node, bounds, active, shadow, eps, use_probe: bool = True) -> NodeSolveResult:
        probe = None
        if use_probe and self.cfg.tree_state_threshold is not None:
            threshold = self.cfg.tree_state_threshold
            probe = lambda dual: tree_state_probe(self.heap, dual, threshold)  # noqa: E731
        trace = None
        if self.cfg.trace_iterations:
            trace = lambda rec: self.log.event("bpcg", node=node.id, **rec)  # noqa: E731
        res = solve_node(self.f, self.region, bounds, active, shadow if self.cfg.use_shadow_set else None, eps,
                         primal_cutoff=self.ub, laziness_K=self.cfg.laziness_K, tree_state_probe=probe,
                         max_iterations=self.cfg.max_bpcg_iterations, use_shadow=self.cfg.use_shadow_set,
                         certify=self.cfg.certify, deadline=self.deadline, trace=trace)
        self.lmo_calls += res.lmo_calls
        for v, val in res.incumbents:
            self.offer(v, val, node.id)
        for v in res.active.vertices:
            self.offer(v, None, node.id)
        return res

    def process(self, node: Node) -> None:
        cfg = self.cfg
        bounds = node.bounds.intersect(self.gbounds)
        if bounds.empty:
            self.close(node, math.inf, "infeasible")
            return
        active, shadow = self.warm_sets(node, bounds)
        try:
            if active is None:
                active = ActiveSet.single(self.start_vertex(node, bounds))
                self.offer(active.vertices[0], None, node.id)
            eps = cfg.node_tolerance(node.depth)
            res = self.run_bpcg(node, bounds, active, shadow, eps)
        except Infeasible:
            self.nodes += 1
            self.close(node, math.inf, "infeasible")
            return
        self.nodes += 1
        x_hat = res.iterate
        bound = max(node.dual_bound, res.dual_bound)
        self.log.event("node", id=node.id, depth=node.depth, status="solved", f=res.value,
                       g=res.certified_gap, bound=bound, lmo_calls=res.lmo_calls,
                       lower=bounds.lower, upper=bounds.upper, termination=res.termination.value)
        if node.id == 0 and res.termination != Termination.TIME_LIMIT:
            self.root_ctx = TighteningContext(self.f.gradient(x_hat), res.value, res.certified_gap, self.ub,
                                              self.mu, self.f.sharpness)
            self.root_x = x_hat.copy()
            if cfg.use_global_tightening and math.isfinite(self.ub):
                self._global_tighten()
        if res.termination == Termination.TIME_LIMIT:
            node.dual_bound = bound
            node.bounds = bounds
            node.warm_active, node.warm_shadow = res.active, res.shadow
            self.push(node)
            return
        if bound >= self.ub - self.prune_tol():
            self.close(node, bound, "pruned")
            return

        frac = fractional_indices(self.region, x_hat, FRAC_TOL)
        if frac:
            self.rounding_probe(x_hat, bounds, node.id)
        integral = not frac and self.region.is_integer_feasible(bounds, x_hat)
        if res.certified_gap > cfg.eps_min and (integral or self._rounds_to_incumbent(x_hat, bounds)):
            # the node is about to close on (or near) an integer point: certify it at eps_min first
            res = self.run_bpcg(node, bounds, res.active, res.shadow, cfg.eps_min, use_probe=False)
            bound = max(bound, res.dual_bound)
            x_hat = res.iterate
            frac = fractional_indices(self.region, x_hat, FRAC_TOL)
            if bound >= self.ub - self.prune_tol():
                self.close(node, bound, "pruned")
                return
        if not frac and self.region.is_integer_feasible(bounds, x_hat):
            self.offer(x_hat, res.value, node.id)
            if res.value - bound <= max(cfg.eps_min, self.prune_tol()) or bound >= self.ub - self.prune_tol():
                self.close(node, bound, "integral")
                return
        if not frac and self._split_variable(res.active) is None:
            # nothing left to branch on (limits or round-off); keep the bound honest
            self.close(node, bound, "unresolved")
            return
        ctx = TighteningContext(self.f.gradient(x_hat), res.value, res.certified_gap, self.ub, self.mu,
                                self.f.sharpness)
        if cfg.use_local_tightening and math.isfinite(self.ub):
            events = []
            tightened = tighten_bounds(ctx, x_hat, bounds, self.J, res.active.vertices, self.region, events,
                                       self.mu is not None)
            for e in events:
                self.log.event("tightening", node=node.id, scope="local", **e.to_dict())
            bounds = tightened
            res.shadow = ShadowSet([v for v in res.shadow.vertices if bounds.contains(v, 1e-9)])
        if frac:
            j = select_branch_variable(x_hat, self.J, cfg.branching,
                                       {"instance": self.inst, "bounds": bounds, "depth": node.depth})
            lo_val, hi_val = math.floor(x_hat[j]), math.ceil(x_hat[j])
        else:
            j = self._split_variable(res.active)
            lo_val = math.floor(x_hat[j] - FRAC_TOL)
            hi_val = lo_val + 1
        self.branch(node, res, bounds, x_hat, j, lo_val, hi_val, bound, ctx)

    def rounding_probe(self, x_hat, bounds: BoundState, node_id: int) -> None:
        """Round the integer coordinates to nearest, falling back to floor."""
        mask = self.region.int_mask
        for rounding in (np.round, np.floor):
            x = x_hat.copy()
            x[mask] = rounding(x_hat[mask] + (FRAC_TOL if rounding is np.floor else 0.0))
            x = np.clip(x, bounds.lower, bounds.upper)
            if self.region.is_integer_feasible(bounds, x):
                self.offer(x, None, node_id)
                return

    def _rounds_to_incumbent(self, x_hat, bounds: BoundState) -> bool:
        if self.incumbent is None or not bounds.contains(self.incumbent):
            return False
        J = self.J
        return bool(np.all(np.round(x_hat[J]) == self.incumbent[J]))

    def _split_variable(self, active: ActiveSet) -> Optional[int]:
        """Lowest integer index on which active vertices disagree."""
        if len(active) < 2:
            return None
        V = np.vstack(active.vertices)
        for j in self.J:
            if np.ptp(V[:, j]) > FRAC_TOL:
                return j
        return None

    def branch(self, node, res, bounds, x_hat, j, lo_val, hi_val, bound, ctx):
        cfg = self.cfg
        left_b = bounds.copy()
        left_b.upper[j] = lo_val
        right_b = bounds.copy()
        right_b.lower[j] = hi_val
        if cfg.use_warm_start:
            (la, ls), (ra, rs) = partition_vertices(res.active, res.shadow, j, (lo_val, hi_val))
        else:
            la = ra = None
            ls = rs = ShadowSet()
        children = []
        for direction, b, a, s in (("down", left_b, la, ls), ("up", right_b, ra, rs)):
            if b.lower[j] > b.upper[j]:
                continue
            child_bound = bound
            if self.mu is not None and abs(x_hat[j] - round(x_hat[j])) > FRAC_TOL:
                child_bound = max(child_bound, strong_convexity_node_bound(ctx, x_hat, j, direction, self.J))
            if cfg.assume_unique_optimum and ctx.sharpness is not None and abs(x_hat[j] - round(x_hat[j])) > FRAC_TOL:
                dist = math.sqrt(rounding_distance_sq(x_hat, j, direction, self.J))
                child_bound = max(child_bound, sharpness_node_bound(ctx, x_hat, dist))
            child = Node(self.next_id, b, a, s, res.certified_gap, child_bound, node.depth + 1, x_hat.copy())
            self.next_id += 1
            children.append(child)
        self.log.event("node", id=node.id, depth=node.depth, status="branched", variable=int(j),
                       children=[c.id for c in children])
        for c in children:
            if c.dual_bound >= self.ub - self.prune_tol():
                self.close(c, c.dual_bound, "pruned")
            else:
                self.push(c)


def solve(instance: ProblemInstance, config: Optional[SolverConfig] = None) -> SolveOutcome:
    """Minimize the instance objective over its integer-feasible set."""
    cfg = SolverConfig() if config is None else config
    log = RunLog({"instance": instance.name, "solver": "hullfw", "config": cfg.to_dict()})
    s = _Search(instance, cfg, log)
    try:
        x0 = instance.region.lmo(s.gbounds, np.zeros(instance.dimension))
    except Infeasible:
        log.finish(status=Status.INFEASIBLE.value, primal=math.inf, dual=math.inf, nodes=0, lmo_calls=1,
                   wall_seconds=time.monotonic() - s.start)
        return SolveOutcome(Status.INFEASIBLE, None, math.inf, math.inf, 0, 1, log)
    s.lmo_calls = 1
    s.offer(x0, None, 0)
    s.push(Node(0, s.gbounds.copy(), ActiveSet.single(x0), ShadowSet(), math.inf, -math.inf, 0))
    s.next_id = 1
    # the root relaxation is always solved, so even a loose tolerance returns its dual bound
    s.process(heapq.heappop(s.heap))
    status = None
    while True:
        lb = s.lower_bound()
        log.event("iteration", lb=lb, ub=s.ub, open=len(s.heap), nodes=s.nodes)
        gap = s.ub - lb
        if not s.heap or gap <= cfg.abs_gap_tolerance:
            status = Status.OPTIMAL
            break
        if gap <= cfg.rel_gap_tolerance * abs(s.ub):
            status = Status.GAP_LIMIT
            break
        if cfg.node_limit is not None and s.nodes >= cfg.node_limit:
            status = Status.NODE_LIMIT
            break
        if s.deadline is not None and time.monotonic() > s.deadline:
            status = Status.TIME_LIMIT
            break
        node = heapq.heappop(s.heap)
        if node.dual_bound >= s.ub - s.prune_tol():
            s.close(node, node.dual_bound, "pruned")
            continue
        s.process(node)
    dual = min(s.lower_bound(), s.ub)
    if s.incumbent is None:
        status = Status.INFEASIBLE if status == Status.OPTIMAL else status
    elif status == Status.OPTIMAL and s.ub - dual > cfg.abs_gap_tolerance:
        status = Status.GAP_LIMIT
    log.finish(status=status.value, primal=s.ub, dual=dual, nodes=s.nodes, lmo_calls=s.lmo_calls,
               wall_seconds=time.monotonic() - s.start)
    return SolveOutcome(status, s.incumbent, s.ub, dual, s.nodes, s.lmo_calls, log)
