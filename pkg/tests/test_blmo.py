import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hullfw.blmo import (BoundState, Budget, GenericMilp, Infeasible, IntegerBox, fractional_indices,
                         is_integer_feasible, knapsack_lmo, lmo, region_from_dict, relaxed_lmo)
from hullfw.milp import Indicator, MilpModel, solve_milp
from hullfw.problems import make_tcmp
from hullfw.simplex import LinearProgram


def box(lo, hi):
    return BoundState(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))


def test_integer_box_per_coordinate():
    region = IntegerBox([0, 0], [3, 3], [0, 1])
    np.testing.assert_array_equal(lmo(region, region.global_bounds(), [1.0, -2.0]), [0, 3])
    # ties go to the lower bound
    np.testing.assert_array_equal(lmo(region, region.global_bounds(), [0.0, 0.0]), [0, 0])
    np.testing.assert_array_equal(relaxed_lmo(region, region.global_bounds(), [1.0, -2.0]), [0, 3])


def test_budget_tie_breaks_to_lower_index():
    region = Budget([1.0, 1.0], 1.0, [0, 0], [1, 1], [0, 1])
    np.testing.assert_array_equal(lmo(region, region.global_bounds(), [-1.0, -1.0]), [1, 0])


def test_budget_relaxed_is_fractional_knapsack():
    region = Budget([1.0, 1.0], 1.5, [0, 0], [1, 1], [0, 1])
    np.testing.assert_allclose(relaxed_lmo(region, region.global_bounds(), [-2.0, -1.0]), [1.0, 0.5])


def test_crossed_bounds_raise_infeasible():
    for region in (IntegerBox([0, 0], [2, 2], [0, 1]), Budget([1.0, 1.0], 1.0, [0, 0], [1, 1], [0, 1])):
        bad = box([1, 0], [0, 1])
        with pytest.raises(Infeasible):
            lmo(region, bad, [1.0, 1.0])
        with pytest.raises(Infeasible):
            relaxed_lmo(region, bad, [1.0, 1.0])


def test_budget_over_capacity_lower_bounds_infeasible():
    region = Budget([1.0, 1.0], 1.0, [0, 0], [1, 1], [0, 1])
    with pytest.raises(Infeasible):
        lmo(region, box([1, 1], [1, 1]), [0.0, 0.0])


def brute_lmo_value(region, bounds, d):
    best = np.inf
    ranges = [range(int(bounds.lower[j]), int(bounds.upper[j]) + 1) for j in range(region.dimension)]
    for z in itertools.product(*ranges):
        x = np.asarray(z, dtype=float)
        if region.is_integer_feasible(bounds, x):
            best = min(best, float(d @ x))
    return best


def test_lmo_lower_bound_property_and_monotonicity():
    rng = np.random.default_rng(0)
    for _ in range(40):
        n = int(rng.integers(2, 5))
        region = Budget(rng.uniform(0.5, 2.0, n), rng.uniform(1.0, 4.0), np.zeros(n), np.full(n, 2.0), range(n))
        d = rng.standard_normal(n)
        b = region.global_bounds()
        v = lmo(region, b, d)
        assert region.is_integer_feasible(b, v)
        assert d @ v == pytest.approx(brute_lmo_value(region, b, d), abs=1e-9)
        # relaxation dominance
        assert d @ relaxed_lmo(region, b, d) <= d @ v + 1e-9
        # shrinking the box never lowers the value
        b2 = b.copy()
        b2.upper[int(rng.integers(0, n))] = 1.0
        assert d @ lmo(region, b2, d) >= d @ v - 1e-9


def test_knapsack_matches_milp_mixed():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n = int(rng.integers(2, 7))
        cost = rng.uniform(0.2, 2.0, n)
        lo = np.zeros(n)
        hi = rng.integers(1, 4, n).astype(float)
        mask = rng.random(n) < 0.6
        budget = float(rng.uniform(0.5, 0.6 * cost @ hi))
        d = rng.standard_normal(n)
        x = knapsack_lmo(cost, budget, lo, hi, mask, d)
        lp = LinearProgram(np.zeros(n), cost[None, :], ("<=",), np.array([budget]), lo, hi)
        ref = solve_milp(MilpModel(lp, np.flatnonzero(mask)), d)
        assert d @ x == pytest.approx(ref.value, abs=1e-8)
        assert cost @ x <= budget + 1e-9


def test_generic_milp_and_tcmp_feasibility():
    inst = make_tcmp(2, 0.5, 0.1, 0.3, 0)
    region = inst.region
    b = inst.global_bounds
    v = lmo(region, b, np.zeros(inst.dimension))
    assert is_integer_feasible(region, b, v)
    bad = np.array([0.1, 0.0, 1.0, 0.0, 0.5, 0.0])
    assert not is_integer_feasible(region, b, bad)
    assert region.indicator_violations(bad) == [2]


def test_midpoint_of_vertices_is_fractional():
    region = IntegerBox([0, 0], [1, 1], [0, 1])
    x = 0.5 * (np.array([0.0, 0.0]) + np.array([1.0, 0.0]))
    assert not region.is_integer_feasible(region.global_bounds(), x)
    assert fractional_indices(region, x) == [0]


def test_monotone_in_rules():
    lp = LinearProgram.from_rows(np.zeros(3), [([1, -1, 0], "<=", 0), ([0, 0, 1], "=", 1)], [0, 0, 0], [1, 1, 1])
    region = GenericMilp(MilpModel(lp, [0, 1]))
    assert region.monotone_in(0, "down")
    assert not region.monotone_in(0, "up")
    assert region.monotone_in(1, "up")
    assert not region.monotone_in(1, "down")
    assert not region.monotone_in(2, "down")
    assert IntegerBox([0], [1], [0]).monotone_in(0, "up")
    budget = Budget([1.0, 2.0], 2.0, [0, 0], [1, 1], [0, 1])
    assert budget.monotone_in(0, "down") and not budget.monotone_in(0, "up")
    inst = make_tcmp(2, 0.5, 0.1, 0.3, 0)
    assert not inst.region.monotone_in(2, "up")


def test_bound_state_helpers():
    a = box([0, 0], [2, 2])
    b = box([1, -1], [3, 1])
    c = a.intersect(b)
    np.testing.assert_array_equal(c.lower, [1, 0])
    np.testing.assert_array_equal(c.upper, [2, 1])
    assert c.subset_of(a) and not a.subset_of(c)
    assert not c.empty and box([1], [0]).empty
    assert a.contains(np.array([1.0, 2.0])) and not a.contains(np.array([3.0, 0.0]))
    with pytest.raises(ValueError):
        BoundState(np.zeros(2), np.zeros(3))


def test_region_round_trip():
    lp = LinearProgram.from_rows(np.zeros(3), [([1, 1, 0], "<=", 1)], [0, 0, 0], [1, 1, 2])
    region = GenericMilp(MilpModel(lp, [0, 1], [Indicator(0, np.array([0.0, 0.0, 1.0]), 0.5)]))
    again = region_from_dict(region.to_dict(), region.lower, region.upper, region.integer_indices)
    d = np.array([-1.0, -0.5, -1.0])
    np.testing.assert_allclose(lmo(again, again.global_bounds(), d), lmo(region, region.global_bounds(), d))
    budget = Budget([1.0, 2.0], 2.0, [0, 0], [1, 1], [0, 1])
    again = region_from_dict(budget.to_dict(), budget.lower, budget.upper, budget.integer_indices)
    assert again.budget == 2.0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.floats(0.5, 4.0))
def test_budget_lmo_is_optimal_property(d, budget):
    region = Budget([1.0, 1.5, 0.7], budget, [0, 0, 0], [2, 1, 2], [0, 1, 2])
    d = np.asarray(d)
    v = lmo(region, region.global_bounds(), d)
    assert d @ v == pytest.approx(brute_lmo_value(region, region.global_bounds(), d), abs=1e-9)
