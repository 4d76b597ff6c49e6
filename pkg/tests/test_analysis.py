import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from greedyopt import BudgetError, InsufficientDataError, canonical_dictionary, make_symmetric_dictionary
from greedyopt.analysis import (
    brute_force_min_A1, check_trace_invariants, closed_form_minimum, compressibility, epsilon_m_power_profile,
    fit_rate, gradient_reference_min, project_capped_simplex, project_l1_ball, reference_minimum,
)
from greedyopt.greedy import GreedyTrace, TraceRecord, ega_c_run, make_coefficients_cs, rega_run, wrga_run
from greedyopt.objective import Logistic, PowerDistance, Quadratic

centers = st.tuples(st.floats(-2, 2), st.floats(-2, 2))


def test_brute_force_examples(D2):
    assert brute_force_min_A1(Quadratic([0.3, 0.2]), D2, 1000) <= 1e-4
    assert brute_force_min_A1(Quadratic([2.0, 0.0]), D2, 50) == pytest.approx(1.0, abs=1e-12)
    assert brute_force_min_A1(Quadratic([0.0, 0.0]), D2, 10) == 0.0


def test_brute_force_budget_guard():
    D = canonical_dictionary(20)
    with pytest.raises(BudgetError):
        brute_force_min_A1(Quadratic(np.zeros(20)), D, 1000, support_cap=3)


@settings(max_examples=300, deadline=None)
@given(centers, st.integers(2, 20))
def test_brute_force_anti_monotone_in_grid(c, n):
    o, D = Quadratic(list(c)), canonical_dictionary(2)
    coarse = brute_force_min_A1(o, D, n)
    assert brute_force_min_A1(o, D, 2 * n) <= coarse
    assert brute_force_min_A1(o, D, 3 * n) <= coarse
    D3 = make_symmetric_dictionary([(1, 1), (1, -2), (0.3, 1)], 2)
    assert brute_force_min_A1(o, D3, 2 * n) <= brute_force_min_A1(o, D3, n)


@settings(max_examples=40, deadline=None)
@given(centers)
def test_brute_force_is_upper_bound_of_closed_form(c):
    o, D = Quadratic(list(c)), canonical_dictionary(2)
    exact = closed_form_minimum(o, D, 1.0)
    assert exact - 1e-12 <= brute_force_min_A1(o, D, 60) <= exact + 1e-3


def test_l1_projection_examples():
    assert np.allclose(project_l1_ball([1.5, 0.5]), [1.0, 0.0])
    assert np.allclose(project_l1_ball([2.0, 0.0]), [1.0, 0.0])
    assert np.allclose(project_l1_ball([0.3, -0.2]), [0.3, -0.2])
    assert np.allclose(project_l1_ball([3.0, 1.0], 2.0), [2.0, 0.0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=6), st.floats(0.1, 3))
def test_l1_projection_is_optimal(v, radius):
    v = np.array(v)
    p = project_l1_ball(v, radius)
    assert np.abs(p).sum() <= radius + 1e-9
    rng = np.random.default_rng(0)
    for _ in range(30):
        z = rng.standard_normal(v.size)
        z *= rng.uniform(0, radius) / max(np.abs(z).sum(), 1e-12)
        assert np.sum((v - p) ** 2) <= np.sum((v - z) ** 2) + 1e-9


def test_capped_simplex_projection():
    assert np.allclose(project_capped_simplex([0.2, -1, 0.3]), [0.2, 0, 0.3])
    assert np.allclose(project_capped_simplex([2.0, 0.0]), [1.0, 0.0])
    w = project_capped_simplex([0.9, 0.8, -0.1])
    assert np.all(w >= 0) and w.sum() == pytest.approx(1.0)


def test_compressibility_examples(D2):
    prof = compressibility(Quadratic([1.5, 0.5]), D2, [0, 0.5, 1, 2, 3], 200)
    assert prof.e_values[2] == pytest.approx(0.5, abs=1e-12)
    assert prof.e_values[3] == prof.e_values[4] == 0.0
    assert prof.e_values == sorted(prof.e_values, reverse=True)
    zero = compressibility(Quadratic([0.0, 0.0]), D2, [0, 1, 5], 20)
    assert zero.e_values == [0.0, 0.0, 0.0]


@settings(max_examples=25, deadline=None)
@given(centers, st.lists(st.floats(0, 4), min_size=1, max_size=5))
def test_compressibility_nonincreasing(c, Ms):
    o = Quadratic(list(c))
    prof = compressibility(o, canonical_dictionary(2), Ms, 30)
    order = np.argsort(Ms, kind="stable")
    vals = [prof.e_values[i] for i in order]
    assert all(v >= 0 for v in vals)
    assert all(a >= b for a, b in zip(vals, vals[1:]))


@settings(max_examples=25, deadline=None)
@given(centers)
def test_compressibility_at_one_matches_brute_force(c):
    o, D = Quadratic(list(c)), canonical_dictionary(2)
    prof = compressibility(o, D, [1.0, 2.0], 40, E_star=0.0)
    assert abs(prof.e_values[0] - brute_force_min_A1(o, D, 40)) <= 1e-12


def test_fit_rate_power_laws():
    m = np.arange(1, 201)
    f = fit_rate(1.0 / m, 0.0, 10)
    assert abs(f.slope + 1) <= 1e-9 and f.r_squared == pytest.approx(1.0)
    f = fit_rate(0.04 / m, 0.0, 10)
    assert abs(f.slope + 1) <= 1e-9 and abs(f.intercept - np.log(0.04)) <= 1e-9
    f = fit_rate(3.0 * m**-0.37 + 1.5, 1.5, 5)
    assert abs(f.slope + 0.37) <= 1e-9
    assert f.window == (6, 200) and f.n_points == 195


def test_fit_rate_excludes_and_reports_zero_gaps():
    m = np.arange(1, 51, dtype=float)
    vals = 1.0 / m
    vals[20:25] = 0.0
    f = fit_rate(vals, 0.0, 10)
    assert f.excluded == [21, 22, 23, 24, 25] and abs(f.slope + 1) <= 1e-9
    with pytest.raises(InsufficientDataError):
        fit_rate(np.zeros(100), 0.0, 10)
    with pytest.raises(InsufficientDataError):
        fit_rate(1.0 / m[:15], 0.0, 10)


def test_fit_rate_on_rega_trace(D2):
    o = Quadratic([0.3, 0.2])
    t = rega_run(o, D2, 200)
    assert fit_rate(t, 0.0, 10).slope <= -0.85


def test_epsilon_m_special_case():
    # compare the closed form with a bisection on A(eps)^q m^(1-q) <= eps
    gt, r, q = 0.7, 0.8, 1.6
    for m in (1, 10, 1000):
        lo, hi = 1e-12, 1e6
        for _ in range(200):
            mid = np.sqrt(lo * hi)
            A = (gt / mid) ** (1 / r)
            lo, hi = (lo, mid) if A**q * m ** (1 - q) <= mid else (mid, hi)
        assert epsilon_m_power_profile(gt, r, q, m) == pytest.approx(hi, rel=1e-9)


def test_reference_minimum_closed_forms(D2):
    assert reference_minimum(Quadratic([1.5, 0.5]), D2, "X") == (0.0, "closed form")
    v, method = reference_minimum(Quadratic([1.5, 0.5]), D2, "A1")
    assert v == pytest.approx(0.5) and "closed form" in method


def test_gradient_reference_matches_closed_form():
    for c in ([1.5, 0.5], [0.3, -0.2], [-2.0, 3.0]):
        o = Quadratic(c)
        D = canonical_dictionary(2)
        assert gradient_reference_min(o, D) == pytest.approx(closed_form_minimum(o, D, 1.0), abs=1e-10)
    D = make_symmetric_dictionary([(1, 1), (1, -1)], 2)
    o = Quadratic([0.2, 0.9])
    assert gradient_reference_min(o, D) <= brute_force_min_A1(o, D, 400) + 1e-12


def test_reference_minimum_non_closed_form():
    D3 = canonical_dictionary(3)
    o = PowerDistance([0.9, -0.7, 0.4], 1.5)
    v, method = reference_minimum(o, D3, "A1", grid_n=60)
    assert "projected gradient" in method and v <= brute_force_min_A1(o, D3, 60, support_cap=3)
    lg = Logistic.random(30, 3, seed=2)
    v, _ = reference_minimum(lg, D3, "X")
    assert np.linalg.norm(lg.gradient(np.linalg.solve(np.eye(3), np.zeros(3)))) > 0
    assert v <= lg.evaluate(np.zeros(3))


@pytest.mark.parametrize("run", ["rega", "wrga", "ega-c", "rega-delta"])
def test_invariants_pass_on_real_traces(run, D2):
    o = Quadratic([0.3, 0.2])
    if run == "rega":
        t = rega_run(o, D2, 40)
    elif run == "wrga":
        t = wrga_run(o, D2, 40)
    elif run == "ega-c":
        t = ega_c_run(o, D2, 200, make_coefficients_cs(2, 1), delta=1e-5, seed=2)
    else:
        t = rega_run(o, D2, 40, delta=1e-4, seed=4)
    rep = check_trace_invariants(t, D2, Quadratic([0.3, 0.2]))
    assert rep.ok, rep.failures
    assert "materialization_consistent" in rep.results


def _hand_trace(D, objectives, coefficient_maps, delta_eff=0.0):
    recs = [TraceRecord(m, 0, v, v, c, 3 * m, 3 * m, delta_eff, lam=0.5)
            for m, (v, c) in enumerate(zip(objectives, coefficient_maps), 1)]
    return GreedyTrace("rega", D, 0.13, recs)


def test_monotonicity_negative_control(D2):
    o = Quadratic([0.3, 0.2])
    pts = [{0: 0.3}, {0: 0.6}]
    t = _hand_trace(D2, [o.evaluate([0.3, 0]), o.evaluate([0.6, 0])], pts, delta_eff=1e-3)
    rep = check_trace_invariants(t, D2, o)
    assert rep.failures.keys() == {"monotone_up_to_delta"}


def test_consistency_negative_control(D2):
    o = Quadratic([0.3, 0.2])
    t = _hand_trace(D2, [0.0], [{0: 0.3}])
    rep = check_trace_invariants(t, D2, o)
    assert "materialization_consistent" in rep.failures
    assert "0.04" in rep.failures["materialization_consistent"][0]


def test_other_negative_controls(D2):
    o = Quadratic([0.3, 0.2])
    rec = TraceRecord(2, 0, 0.13, 0.13, {0: 0.7, 1: 0.6, 2: 0.1}, 10, 5, 0.0, lam=1.5)
    rep = check_trace_invariants(GreedyTrace("rega", D2, 0.13, [rec]), D2, o)
    assert {"consecutive_iterations", "eval_budget", "sparsity", "l1_feasible",
            "lambda_in_unit_interval", "materialization_consistent"} <= rep.failures.keys()
    assert not rep.ok and any("FAIL" in line for line in rep.lines())


def test_delta_override(D2):
    o = Quadratic([0.3, 0.2])
    t = _hand_trace(D2, [o.evaluate([0.3, 0]), o.evaluate([0.6, 0])], [{0: 0.3}, {0: 0.6}])
    assert check_trace_invariants(t, D2, o, delta_eff=[0.0, 1.0]).ok
