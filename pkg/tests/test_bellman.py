import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bellman_zero_scan, entropic_direct, simplex_points
from rsportfolio.bellman import (
    BellmanOperator,
    NonConvergenceError,
    SearchConfig,
    apply_operator,
    center,
    discount_stages,
    solve_discounted,
    solve_ergodic,
    span,
    step_value,
    z_bounds,
)
from rsportfolio.costs import CostSchedule
from rsportfolio.geometry import ValueFunction, build_grid
from rsportfolio.market import scenarios_from_gaussian


@pytest.fixture(scope="module")
def op1(ex1_scenarios, ex1_costs, coarse_grid2):
    return BellmanOperator(coarse_grid2, ex1_scenarios, -0.5, ex1_costs)


def test_span_and_center():
    assert span(np.array([1.0, 3.0, -1.0])) == 2.0
    g = build_grid(2, 0.5)
    vf, c = center(ValueFunction(g, [1.0, 3.0, 2.0]))
    assert c == 2.0
    np.testing.assert_allclose(vf.values, [-1.0, 1.0, 0.0])


def test_first_iterate_matches_exhaustive_scan(op1, ex1_scenarios, ex1_costs, coarse_grid2):
    tv, _ = op1(np.zeros(len(coarse_grid2)))
    gross, probs = ex1_scenarios.gross, ex1_scenarios.weights
    for i in range(0, len(coarse_grid2), 5):
        want = bellman_zero_scan(coarse_grid2.points[i], coarse_grid2.points, gross, probs, -0.5,
                                 ex1_costs.buy, ex1_costs.sell)
        assert tv[i] == pytest.approx(want, abs=1e-10)


def test_first_iterate_two_point_closed_form(op1, coarse_grid2):
    # from a point inside the hold set T0 equals mu(log<pi, w>) at pi itself
    tv, targets = op1(np.zeros(len(coarse_grid2)))
    held = np.flatnonzero(np.abs(targets - coarse_grid2.points).sum(axis=1) < 1e-12)
    assert held.size > 0
    for i in held:
        p = coarse_grid2.points[i, 0]
        want = entropic_direct([math.log(1.5 * p + 0.5 * (1 - p)), math.log(0.6 * p + 1.8 * (1 - p))],
                               [0.5, 0.5], -0.5)
        assert tv[i] == pytest.approx(want, abs=1e-12)


def test_apply_operator_matches_operator(op1, ex1_scenarios, ex1_costs, coarse_grid2):
    v = np.sin(np.arange(len(coarse_grid2)))
    vf, pol = apply_operator(ValueFunction(coarse_grid2, v), ex1_scenarios, -0.5, ex1_costs)
    tv, tg = op1(v)
    np.testing.assert_array_equal(vf.values, tv)
    np.testing.assert_array_equal(pol.targets, tg)


def test_ties_go_to_first_candidate(ex1_scenarios, coarse_grid2):
    # identical assets and no cost difference: every candidate has the same Q
    from rsportfolio.market import ScenarioSet

    flat = ScenarioSet([[1.1, 1.1], [0.9, 0.9]], [0.5, 0.5])
    cs = CostSchedule([0.01, 0.01], [0.01, 0.01])
    tv, targets = BellmanOperator(coarse_grid2, flat, -0.5, cs)(np.zeros(len(coarse_grid2)))
    # staying put is free, so each point holds; at equal value the earliest index wins
    np.testing.assert_allclose(targets, coarse_grid2.points)


def test_refinement_never_lowers_values(ex1_scenarios, ex1_costs, coarse_grid2):
    v = 0.01 * np.cos(np.arange(len(coarse_grid2)))
    plain, _ = BellmanOperator(coarse_grid2, ex1_scenarios, -0.5, ex1_costs)(v)
    refined, targets = BellmanOperator(coarse_grid2, ex1_scenarios, -0.5, ex1_costs, SearchConfig(refine=True))(v)
    assert (refined >= plain - 1e-14).all()
    np.testing.assert_allclose(targets.sum(axis=1), 1.0)


def test_zero_cost_limit_is_static_problem(ex1_scenarios):
    cs = CostSchedule([1e-9, 1e-9], [1e-9, 1e-9])
    g = build_grid(2, 0.01)
    rep = solve_ergodic(ex1_scenarios, -0.5, cs, g, tol=1e-7)
    dense = simplex_points(2, 20000)
    growth = np.log(dense @ ex1_scenarios.gross.T)
    static = max(entropic_direct(row, [0.5, 0.5], -0.5) for row in growth[::1])
    assert rep.lambda_hat == pytest.approx(static, abs=2e-5)
    assert span(rep.value) < 1e-6


def test_example1_lambda_and_residual(ex1_scenarios, ex1_costs):
    rep = solve_ergodic(ex1_scenarios, -0.5, ex1_costs, build_grid(2, 0.005), tol=1e-6)
    assert rep.converged
    assert rep.lambda_hat == pytest.approx(0.044, abs=0.005)
    assert rep.residual_span <= 2 * rep.tol
    assert rep.span_history[-1] <= rep.tol


def test_fixed_iterations(ex1_scenarios, ex1_costs, coarse_grid2):
    rep = solve_ergodic(ex1_scenarios, -0.5, ex1_costs, coarse_grid2, fixed_iters=3)
    assert rep.iterations == 3 and len(rep.span_history) == 3
    # policy of the third application is the maximizer of T applied to v_2
    op = BellmanOperator(coarse_grid2, ex1_scenarios, -0.5, ex1_costs)
    v = np.zeros(len(coarse_grid2))
    for _ in range(2):
        tv, _ = op(v)
        v = tv - 0.5 * (tv.max() + tv.min())
    _, tg = op(v)
    np.testing.assert_array_equal(rep.policy.targets, tg)


def test_positive_gamma_has_higher_growth(ex1_scenarios, ex1_costs, coarse_grid2):
    neg = solve_ergodic(ex1_scenarios, -0.5, ex1_costs, coarse_grid2)
    pos = solve_ergodic(ex1_scenarios, 0.5, ex1_costs, coarse_grid2)
    assert pos.converged
    assert pos.lambda_hat >= neg.lambda_hat


def test_non_convergence_raises(ex1_scenarios, ex1_costs, coarse_grid2):
    with pytest.raises(NonConvergenceError) as info:
        solve_ergodic(ex1_scenarios, -0.5, ex1_costs, coarse_grid2, tol=1e-12, max_iter=2)
    assert info.value.report.iterations == 2
    rep = solve_ergodic(ex1_scenarios, -0.5, ex1_costs, coarse_grid2, tol=1e-12, max_iter=2,
                        raise_on_failure=False)
    assert not rep.converged


def test_solver_validation(ex1_scenarios, ex1_costs, coarse_grid2):
    with pytest.raises(ValueError):
        solve_ergodic(ex1_scenarios, -0.5, ex1_costs, coarse_grid2, tol=0.0)
    with pytest.raises(ValueError):
        solve_ergodic(ex1_scenarios, -0.5, ex1_costs, coarse_grid2, fixed_iters=0)
    with pytest.raises(ValueError):
        solve_discounted(ex1_scenarios, -0.5, ex1_costs, coarse_grid2, alpha=0.0, n_iter=3)
    with pytest.raises(ValueError):
        BellmanOperator(build_grid(3, 0.5), ex1_scenarios, -0.5, ex1_costs)
    with pytest.raises(ValueError):
        z_bounds(ex1_scenarios, 0.0, ex1_costs)


def test_deterministic(ex1_scenarios, ex1_costs, coarse_grid2):
    a = solve_ergodic(ex1_scenarios, -0.5, ex1_costs, coarse_grid2)
    b = solve_ergodic(ex1_scenarios, -0.5, ex1_costs, coarse_grid2)
    np.testing.assert_array_equal(a.value.values, b.value.values)
    np.testing.assert_array_equal(a.policy.targets, b.policy.targets)


def test_three_asset_operator_runs(ex2_model, ex2_costs):
    sc = scenarios_from_gaussian(ex2_model, 256, seed=1)
    g = build_grid(3, 0.1)
    rep = solve_ergodic(sc, -5.0, ex2_costs, g, fixed_iters=3)
    assert np.isfinite(rep.value.values).all()
    np.testing.assert_allclose(rep.policy.targets.sum(axis=1), 1.0)


# -- discounted ---------------------------------------------------------------


def test_discount_stage_count():
    assert discount_stages(-0.5, 0.1) == math.ceil(math.log(0.5e6) / 0.1)
    assert discount_stages(-1e-7, 0.1) == 0


def test_discounted_tail_bound(ex1_scenarios, ex1_costs, coarse_grid2):
    _, diag = solve_discounted(ex1_scenarios, -0.5, ex1_costs, coarse_grid2, alpha=0.1, n_iter=60)
    assert all(s <= b for s, b in zip(diag.sup_diffs, diag.tail_bounds))


def test_strong_discount_converges_fast(ex1_scenarios, ex1_costs, coarse_grid2):
    _, diag = solve_discounted(ex1_scenarios, -0.5, ex1_costs, coarse_grid2, alpha=5.0, n_iter=8)
    assert diag.sup_diffs[-1] < 1e-10


def test_vanishing_discount_approaches_ergodic(ex1_scenarios, ex1_costs, coarse_grid2):
    erg = solve_ergodic(ex1_scenarios, -0.5, ex1_costs, coarse_grid2, tol=1e-10)
    ref = erg.value.values - 0.5 * (erg.value.values.max() + erg.value.values.min())
    dists = []
    for alpha in (0.2, 0.1, 0.05):
        vf, _ = solve_discounted(ex1_scenarios, -0.5, ex1_costs, coarse_grid2, alpha=alpha,
                                 n_iter=int(40 / alpha))
        v = vf.values - 0.5 * (vf.values.max() + vf.values.min())
        dists.append(np.abs(v - ref).max())
    assert dists[0] > dists[1] > dists[2]


# -- properties ---------------------------------------------------------------

values_seed = st.integers(0, 2**32 - 1)


@settings(max_examples=1000)
@given(values_seed)
def test_operator_monotone(op1, seed):
    rng = np.random.default_rng(seed)
    v1 = rng.normal(scale=0.5, size=op1.grid.points.shape[0])
    v2 = v1 + np.abs(rng.normal(scale=0.5, size=v1.shape)) * (rng.random(v1.shape) < 0.5)
    t1, _ = op1(v1)
    t2, _ = op1(v2)
    assert (t1 <= t2 + 1e-10).all()


@settings(max_examples=1000)
@given(values_seed, st.floats(-10, 10))
def test_operator_constant_shift(op1, seed, c):
    v = np.random.default_rng(seed).normal(scale=0.5, size=op1.grid.points.shape[0])
    t1, g1 = op1(v)
    t2, g2 = op1(v + c)
    np.testing.assert_allclose(t2, t1 + c, atol=1e-10)
    np.testing.assert_array_equal(g1, g2)


@settings(max_examples=1000)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(-3, -0.05))
def test_step_value_within_z_bounds(ex1_scenarios, ex1_costs, a, b, gamma):
    zb = z_bounds(ex1_scenarios, gamma, ex1_costs)
    val = step_value([a, 1 - a], [b, 1 - b], ex1_scenarios, gamma, ex1_costs)
    assert zb.z_minus <= val <= zb.z_plus


@settings(max_examples=1000)
@given(st.lists(st.floats(0, 1), min_size=6, max_size=6), st.floats(-8, -0.5))
def test_step_value_within_z_bounds_three_assets(ex2_costs, w, gamma):
    sc = _ex2_small_scenarios()
    pre = (np.array(w[:3]) + 1e-6) / (sum(w[:3]) + 3e-6)
    post = (np.array(w[3:]) + 1e-6) / (sum(w[3:]) + 3e-6)
    zb = z_bounds(sc, gamma, ex2_costs)
    assert zb.z_minus <= step_value(pre, post, sc, gamma, ex2_costs) <= zb.z_plus


_CACHE = {}


def _ex2_small_scenarios():
    if "sc" not in _CACHE:
        from conftest import EX2_COV, EX2_MEAN
        from rsportfolio.market import GaussianReturnModel

        _CACHE["sc"] = scenarios_from_gaussian(GaussianReturnModel(EX2_MEAN, EX2_COV), 512, seed=3)
    return _CACHE["sc"]
