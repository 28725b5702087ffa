import math

import numpy as np
import pytest
from scipy import linalg

from rkhs_tikhonov import (ForwardOp, IndexFunction, SampleSet, SolverOptions, cross_gram,
                           fit_csv_row, gram, lambda_choice, linearize,
                           population_linearized_solution, rate_exponents, smallness_check,
                           tikhonov_objective, tikhonov_solve, FIT_CSV_HEADER)


def _data(op, f, m, sigma, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, m)
    return SampleSet(x, op.apply(f, x) + sigma * rng.standard_normal(m), seed)


def test_objective_zero_at_truth(quad64, space64):
    fbar = space64.function(lambda x: 1 + x)
    data = _data(quad64, fbar.values, 30, 0.0, 0)
    assert tikhonov_objective(quad64, data, fbar, fbar, 0.1) == pytest.approx(0.0, abs=1e-28)


def test_objective_lambda_zero_only_in_diagnostics(quad64, space64):
    fbar = space64.function(lambda x: 1 + x)
    f = space64.function(lambda x: 1 + 0 * x)
    data = _data(quad64, fbar.values, 30, 0.0, 0)
    with pytest.raises(ValueError):
        tikhonov_objective(quad64, data, f, fbar, 0.0)
    misfit = tikhonov_objective(quad64, data, f, fbar, 0.0, diagnostics=True)
    assert misfit == pytest.approx(np.mean((quad64.apply(f.values, data.x) - data.y) ** 2))


def test_objective_against_loops(quad64, space64):
    rng = np.random.default_rng(2)
    f = space64.vec(1 + 0.1 * rng.standard_normal(64))
    fbar = space64.function(lambda x: 1 + 0 * x)
    data = _data(quad64, f.values, 17, 0.1, 5)
    Wt = quad64.weighted_theta(data.x)
    mis = 0.0
    for i in range(data.m):
        s = 0.0
        for j in range(64):
            s += Wt[i, j] * f.values[j] ** 2
        mis += (s - data.y[i]) ** 2
    d = f.values - fbar.values
    pen = d @ space64.metric @ d
    val = tikhonov_objective(quad64, data, f, fbar, 0.3)
    assert val == pytest.approx(mis / data.m + 0.3 * pen, rel=1e-12)


def test_identity_matches_closed_form(grid64, sob, space64):
    op = ForwardOp("identity", grid64, kernel=sob)
    rng = np.random.default_rng(0)
    f = space64.vec(np.sin(4 * grid64.nodes))
    fbar = space64.vec(0.2 * np.ones(64))
    data = _data(op, f.values, 80, 0.1, 1)
    lam = 1e-2
    fit = tikhonov_solve(op, sob, data, fbar, lam)
    E = cross_gram(sob, data.x, grid64.nodes) @ linalg.inv(gram(sob, grid64.nodes))
    G = gram(sob, grid64.nodes)
    A = G @ E.T @ E / data.m + lam * np.eye(64)
    ref = np.linalg.solve(A, G @ E.T @ data.y / data.m + lam * fbar.values)
    assert (fit.solution - ref).norm() <= 1e-8
    assert fit.converged and fit.gn_iters == 1
    del rng


def test_large_lambda_returns_prior(grid64, sob, space64):
    op = ForwardOp("identity", grid64, kernel=sob)
    fbar = space64.function(lambda x: 0.5 + 0 * x)
    data = _data(op, np.sin(grid64.nodes), 50, 0.1, 3)
    fit = tikhonov_solve(op, sob, data, fbar, 1e6)
    assert (fit.solution - fbar).norm() <= 1e-3


def test_exact_recovery_quadratic(quad64, space64, sob):
    f_rho = space64.function(lambda x: 1 + 0.3 * np.sin(2 * np.pi * x))
    fbar = space64.vec(f_rho.values + 0.005)
    data = _data(quad64, f_rho.values, 400, 0.0, 4)
    fit = tikhonov_solve(quad64, sob, data, fbar, 1e-8, SolverOptions(max_iters=200))
    assert fit.converged
    assert (fit.solution - f_rho).norm() <= 1e-3


def test_solver_objective_monotone_and_multistart(quad64, space64, sob):
    f_rho = space64.function(lambda x: 1 + 0.3 * x)
    fbar = space64.function(lambda x: 1 + 0 * x)
    data = _data(quad64, f_rho.values, 100, 0.05, 6)
    fit = tikhonov_solve(quad64, sob, data, fbar, 1e-3, SolverOptions(multistart=2))
    assert np.all(np.diff(fit.objective_trace) < 0)
    assert len(fit.multistart_objectives) == 3
    assert fit.objective_trace[-1] == pytest.approx(min(fit.multistart_objectives))


def test_solver_rejects_bad_lambda(quad64, space64, sob):
    fbar = space64.zeros()
    data = _data(quad64, fbar.values, 5, 0.0, 0)
    for lam in (0.0, -1.0, math.nan):
        with pytest.raises(ValueError):
            tikhonov_solve(quad64, sob, data, fbar, lam)


def test_fit_csv_row(quad64, space64, sob):
    fbar = space64.function(lambda x: 1 + 0 * x)
    data = _data(quad64, fbar.values, 20, 0.1, 0)
    fit = tikhonov_solve(quad64, sob, data, fbar, 0.1)
    row = fit_csv_row(fit, 20, 0.5)
    assert len(row) == len(FIT_CSV_HEADER) and row[0] == "20" and row[-1] == ""


def test_population_solution_limits(quad64, space64, sob):
    f_rho = space64.function(lambda x: 1 + x)
    fbar = space64.function(lambda x: 1 + 0 * x)
    T = linearize(quad64, sob, f_rho).T
    same = population_linearized_solution(T, fbar, fbar, 0.1)
    assert (same - fbar).norm() < 1e-12
    big = population_linearized_solution(T, f_rho, fbar, 1e9 * np.linalg.norm(T, 2))
    assert (big - fbar).norm() < 1e-8 * (f_rho - fbar).norm()


def test_index_function_checks():
    for phi in (IndexFunction.holder(0.5, 2.0), IndexFunction.holder(1.0),
                IndexFunction.log_type(1, 0.5, 0.5)):
        assert all(phi.check(upper_rate=phi.family == "holder").values())
        assert IndexFunction.from_dict(phi.to_dict()) == phi
    with pytest.raises(ValueError):
        IndexFunction.log_type(1, 0.5, 1.0)
    with pytest.raises(ValueError):
        IndexFunction.from_dict({"family": "holder", "q": 1})
    assert IndexFunction.holder(2.0).inverse(0.25) == pytest.approx(0.5)
    lt = IndexFunction.log_type(1, 0.5, 0.5)
    assert float(lt(lt.inverse(0.01))) == pytest.approx(0.01, rel=1e-10)


def test_lambda_choice_closed_forms():
    phi = IndexFunction.holder(0.5)
    assert lambda_choice(729, phi).value == pytest.approx(1 / 9, rel=1e-10)
    assert lambda_choice(1024, phi, 2.0).value == pytest.approx(0.0625, rel=1e-10)
    c = lambda_choice(1, IndexFunction.holder(1.0, 1.0), 2.0)
    assert c.value == pytest.approx(1.0)
    sat = lambda_choice(1, IndexFunction.holder(1.0, 0.5), 2.0)
    assert sat.saturated and sat.value == 0.5


def test_rate_exponents():
    assert rate_exponents(0.5, 2).h1_exponent == pytest.approx(0.2)
    assert rate_exponents(1.0, 2).h1_exponent == pytest.approx(2 / 7)
    assert rate_exponents(0.5, 2).prediction_exponent == pytest.approx(0.4)
    e = rate_exponents(2.0, 2)
    assert e.outside_theory and e.saturated
    assert not rate_exponents(0.75, 1.5).outside_theory


def test_smallness_check():
    assert smallness_check(0, 10)
    assert smallness_check(0.4, 1.0)
    assert not smallness_check(0.5, 1.0)
    with pytest.raises(ValueError):
        smallness_check(-1, 1)
