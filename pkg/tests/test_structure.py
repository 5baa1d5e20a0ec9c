import math

import numpy as np
import pytest

from bipfit import (
    Behavior,
    FittingProblem,
    StoppingRule,
    best_cause,
    block_structure,
    classify,
    feasible,
    limit_points,
    maximal_support,
    partition_from_ratios,
    rate_estimate,
    run,
)
from bipfit.structure import CauseKind, critical_causes

import oracles


def run_capped(problem, n):
    rule = StoppingRule(tol_marginal=1e-300, tol_even_odd=1e-300, max_iters=n)
    return run(problem, rule)


def assert_valid_witness(w, a, b, supp, tol=1e-9):
    assert (w >= 0).all()
    assert not w[~np.asarray(supp, bool)].any()
    np.testing.assert_allclose(w.sum(axis=1), a, atol=tol)
    np.testing.assert_allclose(w.sum(axis=0), b, atol=tol)


# ---------------------------------------------------------------------------
# feasibility with certificates


def test_feasible_fast(fast_problem):
    res = feasible(fast_problem.a, fast_problem.b, fast_problem.support)
    assert res.is_feasible
    assert res.cause is None
    assert_valid_witness(res.witness, fast_problem.a, fast_problem.b, fast_problem.support)


def test_feasible_slow_needs_rerouting(slow_problem):
    # the only feasible matrix is the anti-diagonal one; finding it requires
    # moving mass off the greedy allocation
    res = feasible(slow_problem.a, slow_problem.b, slow_problem.support)
    assert res.is_feasible
    assert_valid_witness(res.witness, slow_problem.a, slow_problem.b, slow_problem.support)
    np.testing.assert_allclose(res.witness, oracles.SLOW_LIMIT, atol=1e-9)


def test_infeasible_divergence_certificate(divergence_problem):
    res = feasible(divergence_problem.a, divergence_problem.b, divergence_problem.support)
    assert not res.is_feasible
    assert res.witness is None
    assert res.deficit == pytest.approx(1.0 / 3.0, abs=1e-12)
    assert res.cause.rows == (1,)
    assert res.cause.cols == (1,)
    assert res.cause.kind is CauseKind.INCOMPATIBILITY
    assert res.cause.ratio == pytest.approx(2.0, abs=1e-12)


def test_feasibility_matches_enumeration_oracle(rng):
    n_infeasible = 0
    for _ in range(150):
        prob = oracles.random_problem(rng)
        res = feasible(prob.a, prob.b, prob.support)
        gap, _, _ = oracles.worst_gap(prob.a, prob.b, prob.support)
        assert res.is_feasible == (gap <= 1e-11)
        if res.is_feasible:
            assert_valid_witness(res.witness, prob.a, prob.b, prob.support)
        else:
            n_infeasible += 1
            # min-cut deficit equals the worst enumeration gap
            assert res.deficit == pytest.approx(gap, abs=1e-12)
            # the returned cause must certify: a zero block with mass excess
            rows, cols = list(res.cause.rows), list(res.cause.cols)
            assert not prob.support[np.ix_(rows, cols)].any()
            comp = [j for j in range(prob.shape[1]) if j not in cols]
            assert prob.a[rows].sum() > prob.b[comp].sum()
    assert 10 < n_infeasible < 140  # corpus exercises both verdicts


# ---------------------------------------------------------------------------
# strongest cause


def test_best_cause_divergence(divergence_problem):
    cause = best_cause(divergence_problem.a, divergence_problem.b, divergence_problem.support)
    assert (cause.rows, cause.cols) == ((1,), (1,))
    assert cause.ratio == pytest.approx(2.0, abs=1e-12)


def test_best_cause_grid_first_step_takes_tie_union(grid_problem):
    # two row sets tie at ratio 2.5: {0} (with columns {2..5}) and {0,1}
    # (with columns {3,4,5}); the union wins
    cause = best_cause(grid_problem.a, grid_problem.b, grid_problem.support)
    assert cause.rows == (0, 1)
    assert cause.cols == (3, 4, 5)
    assert cause.ratio == pytest.approx(2.5, abs=1e-12)


def test_best_cause_grid_second_step_on_remainder(grid_problem):
    rows = [2, 3, 4]
    cols = [3, 4, 5]
    a_sub = grid_problem.a[rows] / grid_problem.a[rows].sum()
    b_sub = grid_problem.b[cols] / grid_problem.b[cols].sum()
    supp_sub = grid_problem.support[np.ix_(rows, cols)]
    cause = best_cause(a_sub, b_sub, supp_sub)
    assert cause.rows == (0,)       # row 2 of the full instance
    assert cause.cols == (1, 2)     # columns 4, 5 of the full instance
    # normalization rescales every ratio by the same factor; the original
    # block ratio is a(3)/b(4) = .25/.2
    assert cause.ratio * grid_problem.a[rows].sum() / grid_problem.b[cols].sum() \
        == pytest.approx(1.25, abs=1e-12)


def test_best_cause_requires_infeasibility(fast_problem):
    with pytest.raises(ValueError, match="ratio"):
        best_cause(fast_problem.a, fast_problem.b, fast_problem.support)


def test_best_cause_matches_enumeration_oracle(rng):
    checked = 0
    for _ in range(200):
        prob = oracles.random_problem(rng, density=0.5)
        expected = oracles.best_cause_by_enumeration(prob.a, prob.b, prob.support)
        if expected is None:
            continue
        checked += 1
        rows, cols, ratio = expected
        cause = best_cause(prob.a, prob.b, prob.support)
        assert cause.rows == rows
        assert cause.cols == cols
        assert cause.ratio == pytest.approx(ratio, rel=1e-9)
    assert checked > 30


# ---------------------------------------------------------------------------
# criticality and maximal support


def test_critical_causes_slow(slow_problem):
    causes = critical_causes(slow_problem.a, slow_problem.b, slow_problem.support)
    assert len(causes) == 1
    assert (causes[0].rows, causes[0].cols) == ((1,), (1,))
    assert causes[0].kind is CauseKind.CRITICALITY


def test_maximal_support_reference_instances(fast_problem, slow_problem):
    np.testing.assert_array_equal(
        maximal_support(fast_problem.a, fast_problem.b, fast_problem.support),
        fast_problem.support,
    )
    np.testing.assert_array_equal(
        maximal_support(slow_problem.a, slow_problem.b, slow_problem.support),
        [[False, True], [True, False]],
    )


def test_maximal_support_rejects_infeasible(divergence_problem):
    with pytest.raises(ValueError, match="infeasible"):
        maximal_support(divergence_problem.a, divergence_problem.b, divergence_problem.support)


def test_maximal_support_matches_enumeration_oracle(rng):
    checked = 0
    for _ in range(150):
        prob = oracles.random_problem(rng, density=0.55)
        if not oracles.feasible_by_enumeration(prob.a, prob.b, prob.support):
            continue
        checked += 1
        got = maximal_support(prob.a, prob.b, prob.support)
        want = oracles.maximal_support_by_enumeration(prob.a, prob.b, prob.support)
        np.testing.assert_array_equal(got, want)
    assert checked > 30


def test_maximal_support_idempotent(slow_problem, rng):
    s1 = maximal_support(slow_problem.a, slow_problem.b, slow_problem.support)
    np.testing.assert_array_equal(
        maximal_support(slow_problem.a, slow_problem.b, s1), s1
    )


# ---------------------------------------------------------------------------
# classification


def test_classify_three_regimes(fast_problem, slow_problem, divergence_problem):
    fast = classify(fast_problem)
    assert fast.behavior is Behavior.FAST_CONVERGENCE
    assert fast.cause is None
    np.testing.assert_array_equal(fast.max_support, fast_problem.support)

    slow = classify(slow_problem)
    assert slow.behavior is Behavior.SLOW_CONVERGENCE
    np.testing.assert_array_equal(slow.max_support, [[False, True], [True, False]])

    div = classify(divergence_problem)
    assert div.behavior is Behavior.DIVERGENCE
    assert div.max_support is None
    assert (div.cause.rows, div.cause.cols) == ((1,), (1,))


def test_classify_behavior_values():
    assert Behavior.FAST_CONVERGENCE.value == "FastConvergence"
    assert Behavior.SLOW_CONVERGENCE.value == "SlowConvergence"
    assert Behavior.DIVERGENCE.value == "Divergence"


# ---------------------------------------------------------------------------
# block structure of divergent instances


def test_block_structure_divergence_2x2(divergence_problem):
    bs = block_structure(divergence_problem)
    assert bs.r == 2
    assert bs.row_blocks == ((1,), (0,))
    assert bs.col_blocks == ((0,), (1,))
    np.testing.assert_allclose(bs.lambdas, oracles.DIV_LAMBDAS, atol=1e-14)
    np.testing.assert_allclose(bs.a_prime, oracles.DIV_A_PRIME, atol=1e-14)
    np.testing.assert_allclose(bs.b_prime, oracles.DIV_A_PRIME, atol=1e-14)


def test_block_structure_grid(grid_problem):
    bs = block_structure(grid_problem)
    assert bs.r == 3
    assert bs.row_blocks == oracles.GRID_ROW_BLOCKS
    assert bs.col_blocks == oracles.GRID_COL_BLOCKS
    np.testing.assert_allclose(bs.lambdas, oracles.GRID_LAMBDAS, atol=1e-12)
    np.testing.assert_allclose(bs.a_prime, oracles.GRID_A_PRIME, atol=1e-12)
    np.testing.assert_allclose(bs.b_prime, oracles.GRID_B_PRIME, atol=1e-12)


def test_block_structure_feasible_is_single_block(fast_problem):
    bs = block_structure(fast_problem)
    assert bs.r == 1
    assert bs.row_blocks == ((0, 1),)
    np.testing.assert_allclose(bs.lambdas, [1.0], atol=1e-14)
    np.testing.assert_allclose(bs.a_prime, fast_problem.a, atol=1e-14)


def test_adjusted_marginals_recover_unit_scaling(rng):
    # a' and b' keep total mass 1 and per-block mass equality by construction
    for _ in range(50):
        prob = oracles.random_problem(rng)
        bs = block_structure(prob)
        assert bs.a_prime.sum() == pytest.approx(1.0, abs=1e-10)
        assert bs.b_prime.sum() == pytest.approx(1.0, abs=1e-10)
        for rows, cols in zip(bs.row_blocks, bs.col_blocks):
            assert bs.a_prime[list(rows)].sum() == pytest.approx(
                prob.b[list(cols)].sum(), abs=1e-10
            )
        if bs.r > 1:
            assert (np.diff(bs.lambdas) > 0).all()


# ---------------------------------------------------------------------------
# limit points


def test_limit_points_divergence_2x2(divergence_problem):
    lp = limit_points(divergence_problem)
    np.testing.assert_allclose(lp.even_limit, oracles.DIV_EVEN_LIMIT, atol=1e-12)
    np.testing.assert_allclose(lp.odd_limit, oracles.DIV_ODD_LIMIT, atol=1e-12)
    np.testing.assert_array_equal(lp.sigma, [[False, True], [True, False]])


def test_limit_points_grid(grid_problem):
    lp = limit_points(grid_problem)
    np.testing.assert_allclose(lp.even_limit, oracles.GRID_EVEN_LIMIT, atol=1e-10)
    np.testing.assert_array_equal(lp.sigma, oracles.GRID_SIGMA)
    expected_odd = oracles.GRID_EVEN_LIMIT * (
        oracles.GRID_A / oracles.GRID_A_PRIME
    )[:, None]
    np.testing.assert_allclose(lp.odd_limit, expected_odd, atol=1e-10)


def test_limit_points_feasible_coincide(fast_problem):
    lp = limit_points(fast_problem)
    np.testing.assert_allclose(lp.even_limit, oracles.FAST_LIMIT, atol=1e-10)
    np.testing.assert_allclose(lp.odd_limit, lp.even_limit, atol=1e-14)


def test_limit_points_agree_with_long_run(divergence_problem):
    lp = limit_points(divergence_problem)
    trace = run(divergence_problem)
    np.testing.assert_allclose(trace.even_limit(), lp.even_limit, atol=1e-10)
    np.testing.assert_allclose(trace.odd_limit(), lp.odd_limit, atol=1e-10)


# ---------------------------------------------------------------------------
# numerics recovering the structure


def test_partition_from_ratios_recovers_row_blocks(divergence_problem, grid_problem):
    trace = run(divergence_problem)
    ratios = trace.ratios(trace.last_even[0]).rows
    assert partition_from_ratios(ratios) == ((1,), (0,))

    trace = run(grid_problem, StoppingRule(tol_marginal=1e-300, max_iters=4000))
    ratios = trace.ratios(trace.last_even[0]).rows
    assert partition_from_ratios(ratios, gap=0.05) == oracles.GRID_ROW_BLOCKS


def test_cross_block_cell_decays_at_scaling_gap_rate(divergence_problem):
    # cell (0, 0) couples the last row block with the first column block;
    # its even-iterate decay rate is half the log-gap of the scaling factors
    trace = run_capped(divergence_problem, 80)
    report = rate_estimate(trace)
    bound = math.log(oracles.DIV_LAMBDAS[0] / oracles.DIV_LAMBDAS[1]) / 2.0
    assert bound == pytest.approx(math.log(0.5), abs=1e-12)
    assert report.rates[0, 0] == pytest.approx(bound, abs=0.03)
