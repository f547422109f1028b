import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from profmatch.errors import DomainError, SizeError
from profmatch.solver import (
    BalanceProblem,
    audit_selection,
    balance_rows,
    brute_force_reference,
    solve_lp_relaxation,
    solve_max_balanced_subset,
)
from profmatch.solver.lp import DualSimplex

FOUR = BalanceProblem(np.array([0.0, 0.1, 0.2, 0.9]) - 0.1, [0.05])


def random_problem(rng, n_max=18, k_max=3):
    n = int(rng.integers(1, n_max + 1))
    k = int(rng.integers(1, k_max + 1))
    return BalanceProblem(rng.normal(size=(n, k)), rng.uniform(0.01, 0.5, size=k))


def test_four_unit_lp_bound():
    # enumerating basic solutions by hand gives 3.2
    assert abs(solve_lp_relaxation(FOUR)["lp_objective"] - 3.2) < 1e-9


def test_four_unit_integer_optimum():
    res = solve_max_balanced_subset(FOUR)
    assert res.indices.tolist() == [0, 1, 2]
    assert res.objective == 3 and res.upper_bound == 3 and res.status == "optimal"


def test_four_unit_brute_force():
    ref = brute_force_reference(FOUR)
    assert ref.objective == 3 and ref.indices.tolist() == [0, 1, 2]


def test_no_features_selects_all():
    p = BalanceProblem(np.zeros((5, 0)), np.zeros(0))
    assert solve_max_balanced_subset(p).objective == 5
    assert solve_lp_relaxation(p)["lp_objective"] == 5
    assert brute_force_reference(p).objective == 5


def test_loose_tolerances_select_all():
    rng = np.random.default_rng(0)
    p = BalanceProblem(rng.normal(size=(40, 3)), np.full(3, 1e9))
    assert solve_max_balanced_subset(p).objective == 40


def test_single_infeasible_unit():
    res = solve_max_balanced_subset(BalanceProblem(np.array([[10.0]]), [0.1]))
    assert res.objective == 0 and res.status == "empty_only"
    assert brute_force_reference(BalanceProblem(np.array([[10.0]]), [0.1])).objective == 0


def test_fixed_variables_respected():
    out = solve_lp_relaxation(FOUR, fixed={0: 0})
    assert out["fractional_solution"][0] == 0.0
    assert out["lp_objective"] <= 3.2 + 1e-9
    # the outlier alone cannot be balanced by the rest
    assert solve_lp_relaxation(FOUR, fixed={3: 1})["status"] == "infeasible"
    with pytest.raises(DomainError):
        solve_lp_relaxation(FOUR, fixed={0: 2})


def test_brute_force_size_limit():
    with pytest.raises(SizeError):
        brute_force_reference(BalanceProblem(np.zeros((26, 1)), [0.1]))


def test_problem_validation():
    with pytest.raises(DomainError):
        BalanceProblem(np.ones((2, 2)), [0.1])
    with pytest.raises(DomainError):
        BalanceProblem(np.array([[np.inf]]), [0.1])
    with pytest.raises(DomainError):
        BalanceProblem(np.ones((2, 1)), [-0.1])


def test_lp_matches_scipy_linprog():
    from scipy.optimize import linprog

    rng = np.random.default_rng(7)
    for _ in range(40):
        p = random_problem(rng, 60, 6)
        A = balance_rows(p.deviations, p.tolerances)
        ref = linprog(-np.ones(p.n), A_ub=A, b_ub=np.zeros(A.shape[0]), bounds=(0, 1), method="highs")
        assert abs(solve_lp_relaxation(p)["lp_objective"] + ref.fun) < 1e-7


def test_dual_simplex_warm_start_agrees_with_cold():
    rng = np.random.default_rng(3)
    p = random_problem(rng, 40, 4)
    A = balance_rows(p.deviations, p.tolerances)
    lp = DualSimplex(A, np.ones(p.n))
    root = lp.solve(np.zeros(p.n), np.ones(p.n))
    lo, hi = np.zeros(p.n), np.ones(p.n)
    hi[0] = 0.0
    warm = lp.solve(lo, hi, root.state)
    cold = lp.solve(lo, hi)
    assert warm.status == cold.status
    if warm.status == "optimal":
        assert abs(warm.objective - cold.objective) < 1e-9


def test_matches_brute_force_random():
    rng = np.random.default_rng(11)
    for _ in range(100):
        p = random_problem(rng)
        res = solve_max_balanced_subset(p)
        ref = brute_force_reference(p)
        assert res.objective == ref.objective
        assert res.status in ("optimal", "empty_only")
        assert audit_selection(p, res.selected)


def test_deterministic():
    rng = np.random.default_rng(5)
    p = random_problem(rng, 200, 5)
    a = solve_max_balanced_subset(p)
    b = solve_max_balanced_subset(p)
    assert np.array_equal(a.selected, b.selected)


def test_node_limit_returns_feasible_bounded():
    rng = np.random.default_rng(2)
    p = BalanceProblem(rng.normal(size=(300, 6)) ** 3, np.full(6, 0.02), node_limit=5)
    res = solve_max_balanced_subset(p)
    assert audit_selection(p, res.selected)
    assert res.objective <= res.upper_bound


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_bound_sandwich(seed):
    p = random_problem(np.random.default_rng(seed), 14, 3)
    res = solve_max_balanced_subset(p)
    ref = brute_force_reference(p)
    assert res.objective <= ref.objective <= res.upper_bound
    assert solve_lp_relaxation(p)["lp_objective"] >= ref.objective - 1e-7
    if res.status == "optimal":
        assert res.objective == res.upper_bound


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1.0, 3.0))
def test_monotone_in_tolerance(seed, factor):
    p = random_problem(np.random.default_rng(seed), 14, 3)
    wider = BalanceProblem(p.deviations, p.tolerances * factor)
    assert solve_max_balanced_subset(wider).objective >= solve_max_balanced_subset(p).objective


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_audit_on_larger_instances(seed):
    rng = np.random.default_rng(seed)
    n, k = int(rng.integers(20, 120)), int(rng.integers(1, 7))
    p = BalanceProblem(rng.normal(size=(n, k)) + rng.normal(size=k), rng.uniform(0.01, 0.3, k))
    res = solve_max_balanced_subset(p)
    D = p.deviations
    m = res.selected
    assert np.all(np.abs(m @ D) <= p.tolerances * m.sum() + 1e-9 * np.maximum(1, np.abs(D).T @ m))
