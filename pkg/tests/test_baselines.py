import math

import numpy as np
import pytest

from hullfw.baselines import solve_nlp_bnb, solve_oa
from hullfw.blmo import IntegerBox
from hullfw.objective import QuadraticObjective
from hullfw.problems import ProblemInstance, make_box_quadratic, make_portfolio
from hullfw.tree import Status

from fixtures import fixture_suite
from oracles import brute_force

TOL = 1e-6


def _box_instance(Q, q, lower, upper, name="box"):
    n = len(q)
    region = IntegerBox(np.asarray(lower, float), np.asarray(upper, float), range(n))
    return ProblemInstance(QuadraticObjective(Q, q), region, name)


def test_oa_linear_objective_converges_in_one_round():
    inst = _box_instance(np.zeros((3, 3)), np.array([1.0, -2.0, 0.5]), [0, 0, 0], [2, 2, 2])
    out = solve_oa(inst)
    assert out.status == Status.OPTIMAL
    assert out.primal == pytest.approx(-4.0)
    assert len(out.log.of_type("iteration")) == 1


def test_oa_binary_quadratic_matches_enumeration():
    Q = np.array([[2.0, 0.5], [0.5, 1.0]])
    q = np.array([-3.0, 0.5])
    inst = _box_instance(Q, q, [0, 0], [1, 1])
    out = solve_oa(inst)
    expected = min(x @ Q @ x + q @ x for x in (np.array(p, float) for p in [(0, 0), (0, 1), (1, 0), (1, 1)]))
    assert out.status == Status.OPTIMAL
    assert out.primal == pytest.approx(expected, abs=TOL)


@pytest.mark.parametrize("seed", range(4))
def test_oa_dual_bounds_valid_and_monotone(seed):
    inst = make_box_quadratic(3, upper=2, seed=seed)
    opt, _ = brute_force(inst)
    out = solve_oa(inst)
    lbs = [e["lb"] for e in out.log.of_type("iteration")]
    assert all(lb <= opt + TOL for lb in lbs)
    assert all(b >= a - 1e-12 for a, b in zip(lbs, lbs[1:]))
    assert out.primal == pytest.approx(opt, abs=TOL)


def test_oa_round_limit_reports_gap_limit():
    inst = make_box_quadratic(4, upper=3, seed=1)
    out = solve_oa(inst, max_rounds=1)
    assert out.status == Status.GAP_LIMIT
    assert out.dual <= out.primal


def test_nlp_bnb_integral_root_is_one_node():
    # continuous minimizer (1, 2) is integral
    Q = np.eye(2)
    q = np.array([-2.0, -4.0])
    inst = _box_instance(Q, q, [0, 0], [3, 3])
    out = solve_nlp_bnb(inst)
    assert out.status == Status.OPTIMAL
    assert out.nodes_processed == 1
    np.testing.assert_allclose(out.incumbent, [1.0, 2.0])


@pytest.mark.parametrize("inst", fixture_suite()[:6], ids=lambda i: i.name)
def test_nlp_bnb_matches_brute_force(inst):
    opt, _ = brute_force(inst)
    out = solve_nlp_bnb(inst, tolerance=TOL)
    assert out.status == Status.OPTIMAL
    assert out.primal == pytest.approx(opt, abs=1e-5)
    assert out.dual <= opt + 1e-5


def test_nlp_bnb_node_limit():
    inst = make_portfolio(12, seed=3)
    out = solve_nlp_bnb(inst, node_limit=2)
    assert out.status in (Status.NODE_LIMIT, Status.OPTIMAL)
    if out.status == Status.NODE_LIMIT:
        assert out.nodes_processed == 2
        assert out.dual <= out.primal or math.isinf(out.primal)
