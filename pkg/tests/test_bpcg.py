import itertools

import numpy as np
import pytest

from hullfw.blmo import BoundState, GenericMilp, Infeasible, IntegerBox
from hullfw.bpcg import (ActiveSet, NumericalFailure, ShadowSet, Termination, adaptive_step, frank_wolfe_gap,
                         solve_node)
from hullfw.milp import MilpModel
from hullfw.objective import ObjectiveOracle, QuadraticObjective
from hullfw.problems import make_box_quadratic, make_portfolio
from hullfw.simplex import LinearProgram
from oracles import projected_gradient


def simplex_edge():
    lp = LinearProgram.from_rows(np.zeros(2), [([1, 1], "=", 1)], [0, 0], [1, 1])
    return GenericMilp(MilpModel(lp, [0, 1]))


def test_symmetric_example():
    f = QuadraticObjective(np.eye(2), -np.ones(2), 0.5)  # ||x - (0.5, 0.5)||^2
    region = simplex_edge()
    res = solve_node(f, region, region.global_bounds(), ActiveSet.single([1.0, 0.0]), eps_tol=1e-8)
    np.testing.assert_allclose(res.iterate, [0.5, 0.5], atol=1e-8)
    assert sorted(res.active.weights) == pytest.approx([0.5, 0.5], abs=1e-8)
    assert res.certified_gap <= 1e-8
    assert res.termination == Termination.GAP_TOLERANCE


def test_optimal_vertex_fixed_point():
    f = QuadraticObjective(np.eye(2), -2 * np.array([1.0, 2.0]))  # minimizer (1, 2) is an integer point
    region = IntegerBox([0, 0], [3, 3], [0, 1])
    steps = []
    res = solve_node(f, region, region.global_bounds(), ActiveSet.single([1.0, 2.0]), eps_tol=1e-6,
                     trace=lambda r: steps.append(r["step"]))
    assert "pairwise" not in steps
    assert res.certified_gap == pytest.approx(frank_wolfe_gap(f, region, region.global_bounds(), res.iterate))
    np.testing.assert_allclose(res.iterate, [1.0, 2.0])


def test_box_quadratic_reaches_hull_optimum():
    # over an integer box the hull is the box itself
    for seed in range(5):
        inst = make_box_quadratic(3, upper=2, seed=seed)
        f = inst.objective
        b = inst.global_bounds
        res = solve_node(f, inst.region, b, ActiveSet.single(np.zeros(3)), eps_tol=1e-6)
        ref = projected_gradient(f.value, f.gradient, lambda y: np.clip(y, 0, 2), np.ones(3))
        assert res.value <= f(ref) + 1e-6
        assert res.value - res.certified_gap <= f(ref) + 1e-9


def test_dual_bound_below_every_feasible_point():
    for seed in range(5):
        inst = make_portfolio(5, 1.0, seed, upper=2)
        b = inst.global_bounds
        res = solve_node(inst.objective, inst.region, b, ActiveSet.single(np.zeros(5)), eps_tol=1e-3)
        for z in itertools.product(range(3), repeat=5):
            x = np.asarray(z, dtype=float)
            if inst.region.is_integer_feasible(b, x):
                assert res.dual_bound <= inst.objective(x) + 1e-9


def test_active_set_invariants_and_no_duplicate_vertices():
    for seed in range(6):
        inst = make_portfolio(8, 1.0, seed, upper=2)
        b = inst.global_bounds
        res = solve_node(inst.objective, inst.region, b, ActiveSet.single(np.zeros(8)), eps_tol=1e-6)
        w = np.asarray(res.active.weights)
        assert w.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(w > 1e-12)
        np.testing.assert_allclose(res.active.iterate(), res.iterate, atol=1e-10)
        keys = [tuple(v) for v in res.active.vertices]
        assert len(keys) == len(set(keys))
        skeys = {tuple(v) for v in res.shadow.vertices}
        assert not skeys & set(keys)
        fw = [tuple(v) for v in res.fw_vertices]
        assert len(fw) == len(set(fw))


def test_lazification_agrees_with_eager():
    for seed in range(5):
        inst = make_portfolio(7, 1.0, seed, upper=2)
        b = inst.global_bounds
        lazy = solve_node(inst.objective, inst.region, b, ActiveSet.single(np.zeros(7)), eps_tol=1e-7, laziness_K=4)
        eager = solve_node(inst.objective, inst.region, b, ActiveSet.single(np.zeros(7)), eps_tol=1e-7, laziness_K=1,
                           use_shadow=False)
        assert lazy.value == pytest.approx(eager.value, abs=2e-7)


def test_cutoff_and_probe_terminations():
    inst = make_portfolio(6, 1.0, 0, upper=2)
    b = inst.global_bounds
    start = ActiveSet.single(np.zeros(6))
    res = solve_node(inst.objective, inst.region, b, start, eps_tol=1e-6)
    assert res.termination == Termination.GAP_TOLERANCE
    cutoff = res.value - 1.0  # every point of the node is worse than this incumbent
    res = solve_node(inst.objective, inst.region, b, start, eps_tol=1e-6, primal_cutoff=cutoff)
    assert res.termination == Termination.CUTOFF
    assert res.dual_bound >= cutoff
    res = solve_node(inst.objective, inst.region, b, start, eps_tol=1e-9, tree_state_probe=lambda dual: True)
    assert res.termination == Termination.TREE_STATE


def test_iteration_limit():
    inst = make_portfolio(10, 1.0, 1, upper=2)
    b = inst.global_bounds
    res = solve_node(inst.objective, inst.region, b, ActiveSet.single(np.zeros(10)), eps_tol=1e-12,
                     max_iterations=3)
    assert res.termination == Termination.ITERATION_LIMIT
    assert res.iterations == 3


def test_argument_errors_and_infeasible_bounds():
    region = IntegerBox([0, 0], [1, 1], [0, 1])
    f = QuadraticObjective(np.eye(2), np.zeros(2))
    with pytest.raises(ValueError):
        solve_node(f, region, region.global_bounds(), ActiveSet(), eps_tol=1e-6)
    with pytest.raises(ValueError):
        solve_node(f, region, region.global_bounds(), ActiveSet.single([0, 0]), eps_tol=0.0)
    with pytest.raises(ValueError):
        solve_node(f, region, region.global_bounds(), ActiveSet.single([0, 0]), laziness_K=0.5)
    with pytest.raises(Infeasible):
        solve_node(f, region, BoundState([1, 0], [0, 1]), ActiveSet.single([0, 0]))


class NanObjective(ObjectiveOracle):
    def value(self, x):
        return float("nan")

    def gradient(self, x):
        return np.zeros(self.dimension)


def test_numerical_failure_reports_iterate():
    region = IntegerBox([0, 0], [1, 1], [0, 1])
    with pytest.raises(NumericalFailure) as info:
        solve_node(NanObjective(2), region, region.global_bounds(), ActiveSet.single([1.0, 0.0]))
    np.testing.assert_array_equal(info.value.iterate, [1.0, 0.0])


def test_adaptive_step_examples():
    f = QuadraticObjective(0.5 * np.eye(3), np.zeros(3))  # 0.5 ||x||^2
    x = np.array([1.0, -2.0, 0.5])
    gamma, L = adaptive_step(f, x, x, 5.0, 1.0)
    assert gamma == pytest.approx(1.0) and L == pytest.approx(1.0)
    gamma, _ = adaptive_step(f, x, x, 0.3, 1.0)
    assert gamma == pytest.approx(0.3)
    rng = np.random.default_rng(0)
    for _ in range(20):
        B = rng.standard_normal((3, 3))
        g = QuadraticObjective(B.T @ B + 0.1 * np.eye(3), rng.standard_normal(3))
        x = rng.standard_normal(3)
        d = g.gradient(x)
        exact = (g.gradient(x) @ d) / (2 * g.curvature(d))
        gamma, _ = adaptive_step(g, x, d, 10.0, 1.0)
        assert gamma >= exact / 2 - 1e-12
    with pytest.raises(ValueError):
        adaptive_step(f, x, -f.gradient(x), 1.0, 1.0)


def test_frank_wolfe_gap_examples():
    region = IntegerBox([0, 0], [2, 2], [0, 1])
    b = region.global_bounds()
    lin = QuadraticObjective(np.zeros((2, 2)), np.array([1.0, -1.0]))
    x = np.array([1.0, 1.0])
    assert frank_wolfe_gap(lin, region, b, x) == pytest.approx(lin.q @ x - (-2.0))
    assert frank_wolfe_gap(lin, region, b, np.array([0.0, 2.0])) == pytest.approx(0.0)
    f = make_box_quadratic(2, upper=2, seed=3).objective
    ref = projected_gradient(f.value, f.gradient, lambda y: np.clip(y, 0, 2), np.ones(2))
    rng = np.random.default_rng(1)
    for _ in range(10):
        y = rng.uniform(0, 2, 2)
        assert frank_wolfe_gap(f, region, b, y) >= f(y) - f(ref) - 1e-9


def test_shadow_set_helpers():
    s = ShadowSet()
    s.add([1.0, 0.0])
    s.add([1.0, 0.0])
    assert len(s) == 1 and s.index([1.0, 0.0]) == 0 and s.index([0.0, 1.0]) == -1
    a = ActiveSet([[0.0, 0.0], [2.0, 0.0]], [1.0, 3.0])
    a.normalize()
    np.testing.assert_allclose(a.iterate(), [1.5, 0.0])
    with pytest.raises(ValueError):
        ActiveSet([[0.0]], [0.5, 0.5])
