import math

import numpy as np
import pytest

from hullfw.blmo import BoundState, IntegerBox
from hullfw.bpcg import ActiveSet, solve_node
from hullfw.objective import QuadraticObjective
from hullfw.problems import ProblemInstance, make_box_quadratic
from hullfw.tightening import (TighteningContext, Unsupported, global_tightening, rounding_distance_sq,
                               sharpness_node_bound, strong_convexity_node_bound, tighten_bounds)
from fixtures import outside_center_quadratic
from oracles import brute_force


def spec_objective():
    # (x1 - 0.2)^2 + (x2 + 1)^2
    return QuadraticObjective(np.eye(2), np.array([-0.4, 2.0]), 0.04 + 1.0)


def spec_context(mu=None):
    f = spec_objective()
    x = np.zeros(2)
    return TighteningContext(f.gradient(x), f(x), 1.2, 1.04, mu), x


def test_spec_example_fixes_second_variable():
    ctx, x = spec_context()
    assert ctx.f_hat == pytest.approx(1.04)
    events = []
    b = tighten_bounds(ctx, x, BoundState([0, 0], [3, 3]), [0, 1], events=events)
    assert b.upper[1] == 0 and b.upper[0] == 3
    assert [(e.variable, e.side, e.new, e.rule) for e in events] == [(1, "upper", 0.0, "gap")]
    inst = ProblemInstance(spec_objective(), IntegerBox([0, 0], [3, 3], [0, 1]))
    assert brute_force(inst)[1][1] == 0


def test_spec_example_with_mu_still_fires():
    ctx, x = spec_context(mu=2.0)
    b = tighten_bounds(ctx, x, BoundState([0, 0], [3, 3]), [0, 1])
    assert b.upper[1] == 0


def test_zero_gradient_never_tightens():
    ctx = TighteningContext(np.zeros(2), 0.0, 0.0, 0.0)
    b = tighten_bounds(ctx, np.zeros(2), BoundState([0, 0], [3, 3]), [0, 1])
    np.testing.assert_array_equal(b.upper, [3, 3])


def test_infinite_upper_bound_is_noop():
    ctx, x = spec_context()
    ctx = ctx.with_upper_bound(math.inf)
    b = global_tightening(ctx, x, math.inf, BoundState([0, 0], [3, 3]), [0, 1])
    np.testing.assert_array_equal(b.upper, [3, 3])


def test_upper_side_rule():
    ctx = TighteningContext(np.array([-3.0]), 0.0, 0.5, 1.0)
    events = []
    b = tighten_bounds(ctx, np.array([4.0]), BoundState([0], [4]), [0], events=events)
    # M = 1: 3 > 1.5 fires, so the variable is fixed at its upper bound
    assert b.lower[0] == 4 and events[0].side == "lower"


def test_partial_tightening_keeps_some_range():
    ctx = TighteningContext(np.array([1.0]), 0.0, 1.0, 1.5)
    b = tighten_bounds(ctx, np.array([0.0]), BoundState([0], [5]), [0])
    # budget 2.5: M = 3 is the first with M > 2.5, so u = 2
    assert b.upper[0] == 2


def test_active_vertex_off_bound_blocks_rule():
    ctx, x = spec_context()
    b = tighten_bounds(ctx, x, BoundState([0, 0], [3, 3]), [0, 1], active=[np.array([0.0, 1.0]), np.zeros(2)])
    assert b.upper[1] == 3


def test_global_tightening_monotone_in_upper_bound():
    ctx, x = spec_context()
    prev = BoundState([0, 0], [3, 3])
    for ub in (3.0, 2.0, 1.5, 1.04):
        b = global_tightening(ctx, x, ub, BoundState([0, 0], [3, 3]), [0, 1])
        assert b.subset_of(prev)
        prev = b


def node_data(inst, eps=1e-3):
    b = inst.global_bounds
    res = solve_node(inst.objective, inst.region, b, ActiveSet.single(inst.region.lmo(b, np.zeros(inst.dimension))),
                     eps_tol=eps)
    return res, b


def test_tightening_never_excludes_optimum_on_random_instances():
    fired = 0
    for seed in range(25):
        inst = outside_center_quadratic(seed)
        opt, x_star = brute_force(inst)
        res, b = node_data(inst)
        f = inst.objective
        for ub in (opt + 1e-6, opt + 0.1, opt + 1.0):
            ctx = TighteningContext(f.gradient(res.iterate), res.value, res.certified_gap, ub,
                                    f.strong_convexity_mu)
            for sc in (False, True):
                nb = tighten_bounds(ctx, res.iterate, b, inst.integer_indices, res.active.vertices, inst.region,
                                    use_strong_convexity=sc)
                fired += int(np.sum(nb.upper < b.upper) + np.sum(nb.lower > b.lower))
                # removed points are no better than UB, so an optimum below UB survives
                assert brute_force(inst, nb)[0] == pytest.approx(opt, abs=1e-9)
    assert fired > 0


def test_strong_convexity_bound_examples():
    ctx = TighteningContext(np.zeros(2), 1.0, 0.0, math.inf, mu=2.0)
    x = np.array([0.5, 1.0])
    assert strong_convexity_node_bound(ctx, x, 0, "down", [0, 1]) == pytest.approx(1.25)
    ctx0 = TighteningContext(np.zeros(2), 1.0, 0.3, math.inf, mu=0.0)
    assert strong_convexity_node_bound(ctx0, x, 0, "up", [0, 1]) == pytest.approx(0.7)
    with pytest.raises(Unsupported):
        strong_convexity_node_bound(TighteningContext(np.zeros(2), 1.0, 0.0, 1.0), x, 0, "down", [0, 1])
    assert rounding_distance_sq(np.array([0.3, 1.6]), 0, "up", [0, 1]) == pytest.approx(0.49 + 0.16)


def test_strong_convexity_bound_below_child_optimum():
    checked = 0
    for seed in range(30):
        inst = make_box_quadratic(3, upper=2, seed=seed)
        res, b = node_data(inst, eps=1e-6)
        f = inst.objective
        ctx = TighteningContext(f.gradient(res.iterate), res.value, res.certified_gap, math.inf,
                                f.strong_convexity_mu)
        for j in inst.integer_indices:
            xj = res.iterate[j]
            if abs(xj - round(xj)) <= 1e-6:
                continue
            for direction in ("down", "up"):
                child = b.copy()
                if direction == "down":
                    child.upper[j] = math.floor(xj)
                else:
                    child.lower[j] = math.ceil(xj)
                sub, _ = brute_force(inst, child)
                assert strong_convexity_node_bound(ctx, res.iterate, j, direction, inst.integer_indices) <= sub + 1e-9
                checked += 1
    assert checked > 10


def test_sharpness_bound_examples():
    ctx = TighteningContext(np.zeros(1), 2.0, 0.0, math.inf, sharpness=(0.5, 2.0))
    # M^{-1/theta} D^{1/theta} + f = D^2 / 4 + 2
    assert sharpness_node_bound(ctx, np.zeros(1), 1.0) == pytest.approx(2.25)
    clamp = TighteningContext(np.zeros(1), 2.0, 1.0, math.inf, sharpness=(0.5, 2.0))
    assert sharpness_node_bound(clamp, np.zeros(1), 1.5) == pytest.approx(1.0)
    with pytest.raises(Unsupported):
        sharpness_node_bound(TighteningContext(np.zeros(1), 0.0, 0.0, 0.0), np.zeros(1), 1.0)


def test_sharpness_bound_below_child_optimum_for_strongly_convex():
    for seed in range(20):
        inst = make_box_quadratic(3, upper=2, seed=seed)
        res, b = node_data(inst, eps=1e-6)
        f = inst.objective
        mu = f.strong_convexity_mu
        ctx = TighteningContext(f.gradient(res.iterate), res.value, res.certified_gap, math.inf,
                                sharpness=(0.5, math.sqrt(2.0 / mu)))
        for j in inst.integer_indices:
            xj = res.iterate[j]
            if abs(xj - round(xj)) <= 1e-6:
                continue
            for direction in ("down", "up"):
                child = b.copy()
                if direction == "down":
                    child.upper[j] = math.floor(xj)
                else:
                    child.lower[j] = math.ceil(xj)
                sub, _ = brute_force(inst, child)
                dist = math.sqrt(rounding_distance_sq(res.iterate, j, direction, inst.integer_indices))
                assert sharpness_node_bound(ctx, res.iterate, dist) <= sub + 1e-6


def test_event_serialization():
    ctx, x = spec_context()
    events = []
    tighten_bounds(ctx, x, BoundState([0, 0], [3, 3]), [0, 1], events=events)
    assert events[0].to_dict() == {"variable": 1, "side": "upper", "old": 3.0, "new": 0.0, "rule": "gap"}
