import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nsreg.harness import ExperimentSpec, run_experiment
from nsreg.linalg import MatrixOperator, Signal, inner
from nsreg.penalties import DenoiseSettings, ElasticNetL1, SquaredNorm, TV1D
from nsreg.problems import AutoconvOperator, FredholmOperator, autoconv_tv_penalty
from nsreg.solver import (DegenerateStepError, LinearAsNonlinear, RunRecord, SolverConfig,
                          Termination, init_state, iterate_once, rule1_check,
                          rule2_alpha_update, run_linear, run_nonlinear, step_size)
from oracles import nsit_sequence

IDENTITY = MatrixOperator(np.eye(3))


def _unit_residual():
    r = Signal(np.array([0.6, 0.0, 0.8]))
    return r, IDENTITY.precond_solve(1.0, r)


# config -----------------------------------------------------------------------

@pytest.mark.parametrize("changes", [
    {"tau": 1.0}, {"mu0": 0.0}, {"mu1": -1.0}, {"alpha0": 0.0}, {"gamma0": 0.0},
    {"gamma0": 0.9, "gamma1": 0.5}, {"gamma1": 1.5}, {"rho_hat": 1.0}, {"stop": "other"},
    {"fixed_step": 0.0}, {"max_outer_iters": -1},
])
def test_config_rejects_invalid(changes):
    with pytest.raises(ValueError):
        SolverConfig(**changes)


def test_config_mu0_against_penalty():
    with pytest.raises(ValueError):
        SolverConfig(mu0=2.0).check_penalty(0.5)
    with pytest.warns(RuntimeWarning):
        SolverConfig(tau=1.01, mu0=0.1).check_penalty(0.5)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        SolverConfig(tau=2.0, mu0=0.5).check_penalty(0.5)


# step size ----------------------------------------------------------------------

def test_step_size_identity():
    r, v = _unit_residual()
    assert step_size(IDENTITY, 1.0, r, v, 0.5, 10.0) == pytest.approx(1.0, rel=1e-14)


def test_step_size_cap_binds():
    r, v = _unit_residual()
    assert step_size(IDENTITY, 1.0, r, v, 0.5, 0.8) == 0.8


def test_step_size_small_alpha():
    A = MatrixOperator(np.eye(1))
    r = Signal([1.0])
    v = A.precond_solve(0.01, r)
    assert step_size(A, 0.01, r, v, 1.0, 100.0) == pytest.approx(1.01, rel=1e-13)


def test_step_size_degenerate():
    A = MatrixOperator(np.zeros((2, 2)))
    r = Signal([1.0, 0.0])
    with pytest.raises(DegenerateStepError):
        step_size(A, 1.0, r, A.precond_solve(1.0, r), 1.0, 1.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(1e-8, 1e2), st.floats(1e-3, 10), st.floats(1e-3, 10))
def test_step_size_bounds_property(seed, alpha, mu0, mu1):
    rng = np.random.default_rng(seed)
    A = MatrixOperator(rng.standard_normal((6, 4)))
    r = Signal(rng.standard_normal(6))
    M = A.matrix
    v = r.like(np.linalg.solve(alpha * np.eye(6) + M @ M.T, r.values))
    t = step_size(A, alpha, r, v, mu0, mu1)
    assert min(mu0, mu1) <= t <= mu1


# rule 1 / rule 2 ----------------------------------------------------------------

def test_rule1_zero_residual():
    z = Signal(np.zeros(3))
    assert rule1_check(1.0, z, z, 0.0, 1.01)
    assert rule1_check(1.0, z, z, 0.3, 1.01)


def test_rule1_identity_examples():
    r, v = _unit_residual()
    assert rule1_check(1.0, r, v, 0.8, 1.01)
    assert not rule1_check(1.0, r, v, 0.5, 1.01)


def test_rule1_exact_data_needs_zero_residual():
    r, v = _unit_residual()
    assert not rule1_check(1.0, r * 1e-9, v * 1e-9, 0.0, 1.01)


def test_rule2_branches():
    assert rule2_alpha_update(1.0, 5.0, 0.5, 0.99, 2.5) == 0.5
    assert rule2_alpha_update(1.0, 1.0, 0.5, 0.99, 2.5) == 0.99
    assert rule2_alpha_update(1.0, 2.5, 0.5, 0.99, 2.5) == 0.99


@given(st.floats(1e-12, 1e6), st.floats(0, 100), st.floats(0.01, 1), st.floats(0, 1))
def test_rule2_range(alpha, rho, g0, frac):
    g1 = g0 + frac * (1 - g0)
    out = rule2_alpha_update(alpha, rho, g0, g1, 2.0)
    assert g0 * alpha <= out <= g1 * alpha and out > 0


# iterate_once -----------------------------------------------------------------

def _small_problem(seed=0, m=8, n=8):
    rng = np.random.default_rng(seed)
    return MatrixOperator(rng.standard_normal((m, n))), rng


def test_iterate_once_fixed_point():
    A, rng = _small_problem()
    xi0 = A.domain_signal(rng.standard_normal(8))
    y = A.apply(xi0)
    cfg = SolverConfig(tau=2.0, mu0=0.5)
    state = init_state(A, y, 0.1, SquaredNorm(), cfg, xi0)
    nxt = iterate_once(state, A, y, SquaredNorm(), cfg, 0.1)
    assert nxt.n == 1
    np.testing.assert_array_equal(nxt.xi.values, state.xi.values)
    np.testing.assert_array_equal(nxt.x.values, state.x.values)


def test_iterate_once_reduces_to_nsit():
    A, rng = _small_problem(1)
    y = A.range_signal(rng.standard_normal(8))
    cfg = SolverConfig(tau=2.0, mu0=0.5, alpha0=0.3, fixed_step=1.0)
    x0 = A.domain_signal(rng.standard_normal(8))
    state = init_state(A, y, 0.0, SquaredNorm(), cfg, x0)
    nxt = iterate_once(state, A, y, SquaredNorm(), cfg, 0.0)
    M = A.matrix
    expected = x0.values - M.T @ np.linalg.solve(0.3 * np.eye(8) + M @ M.T, M @ x0.values - y.values)
    np.testing.assert_allclose(nxt.x.values, expected, rtol=1e-8, atol=1e-10)


def test_iterate_once_l1_dead_zone():
    A, rng = _small_problem(2)
    y = A.range_signal(1e-3 * rng.standard_normal(8))
    cfg = SolverConfig(tau=2.0, mu0=0.05, mu1=1.0)
    pen = ElasticNetL1(10)
    state = init_state(A, y, 1e-6, pen, cfg)
    nxt = iterate_once(state, A, y, pen, cfg, 1e-6)
    assert np.max(np.abs(nxt.xi.values)) <= 1
    assert np.all(nxt.x.values == 0)


# run_linear -------------------------------------------------------------------

def test_run_linear_exact_start_stops_immediately():
    A, rng = _small_problem(3)
    xi0 = A.domain_signal(rng.standard_normal(8))
    rec = run_linear(A, A.apply(xi0), 1e-3, SquaredNorm(), SolverConfig(tau=2.0, mu0=0.5),
                     xi0=xi0)
    assert rec.n_delta == 0
    assert rec.termination is Termination.DISCREPANCY_SATISFIED


def test_run_linear_matches_nsit_oracle():
    rng = np.random.default_rng(4)
    M = rng.standard_normal((20, 20))
    y = M @ rng.standard_normal(20)
    A = MatrixOperator(M)
    cfg = SolverConfig(tau=2.0, mu0=0.5, alpha0=1.0, gamma0=0.5, gamma1=0.5, fixed_step=1.0,
                       max_outer_iters=10)
    xs = nsit_sequence(M, y, 1.0, 0.5, 10)
    state = init_state(A, A.range_signal(y), 0.0, SquaredNorm(), cfg)
    for n in range(10):
        state = iterate_once(state, A, A.range_signal(y), SquaredNorm(), cfg, 0.0)
        assert np.max(np.abs(state.x.values - xs[n + 1])) <= 1e-8
    rec = run_linear(A, A.range_signal(y), 0.0, SquaredNorm(), cfg)
    np.testing.assert_allclose(rec.final_x.values, xs[10], atol=1e-8)


def test_run_linear_sparse_example():
    res = run_experiment(ExperimentSpec("Integral1D", delta=1e-3, penalty="l1"))
    assert res.metrics.termination == "DiscrepancySatisfied"
    assert res.metrics.n_delta <= 60
    assert res.metrics.relative_l2 <= 0.1


def test_cap_reached():
    A, rng = _small_problem(5)
    y = A.range_signal(rng.standard_normal(8))
    cfg = SolverConfig(tau=2.0, mu0=0.5, max_outer_iters=3)
    rec = run_linear(A, y, 1e-12, SquaredNorm(), cfg)
    assert rec.termination is Termination.CAP_REACHED
    assert rec.n_delta == 3


def test_step_bounds_along_run():
    op = FredholmOperator(100)
    x = op.domain_signal(np.sin(np.pi * op.nodes))
    y = op.apply(x)
    e = y.like(np.random.default_rng(6).standard_normal(101))
    cfg = SolverConfig(tau=1.5, mu0=0.3, mu1=1.0, alpha0=0.01, gamma0=0.6, gamma1=0.99)
    rec = run_linear(op, y + e * (1e-3 / e.norm()), 1e-3, SquaredNorm(), cfg)
    t = rec.steps
    assert t.size == rec.n_delta > 0
    assert np.all(t >= min(cfg.mu0, cfg.mu1)) and np.all(t <= cfg.mu1)


def test_xi_stays_in_range_of_adjoint():
    rng = np.random.default_rng(7)
    M = rng.standard_normal((5, 12))
    wd = rng.uniform(0.5, 2, 12)
    A = MatrixOperator(M, wd, 1.0)
    xi0 = A.domain_signal(rng.standard_normal(12))
    y = A.range_signal(rng.standard_normal(5))
    cfg = SolverConfig(tau=2.0, mu0=0.01, max_outer_iters=15)
    rec = run_linear(A, y, 1e-8, ElasticNetL1(2.0), cfg, xi0=xi0)
    # range of A^* = W_d^{-1} M^T; remove that component and nothing may remain
    B = M.T / wd[:, None]
    d = rec.final_xi.values - xi0.values
    coef, *_ = np.linalg.lstsq(B, d, rcond=None)
    assert np.linalg.norm(d - B @ coef) <= 1e-10 * max(1.0, np.linalg.norm(d))
    assert np.linalg.norm(d) > 0


def test_exact_data_convergence():
    rng = np.random.default_rng(8)
    M = np.eye(10) + 0.2 * rng.standard_normal((10, 10))
    A = MatrixOperator(M)
    y = A.apply(A.domain_signal(rng.standard_normal(10)))
    for pen in (SquaredNorm(), ElasticNetL1(5.0)):
        cfg = SolverConfig(tau=2.0, mu0=0.5 * 4 * pen.c0, mu1=1.0, alpha0=1.0, gamma0=0.5)
        rec = run_linear(A, y, 0.0, pen, cfg)
        assert rec.termination is Termination.EXACT_DATA_RESIDUAL_ZERO
        assert (A.apply(rec.final_x) - y).norm() <= 1e-6


def test_bregman_monotone_small():
    op = FredholmOperator(60)
    xt = op.domain_signal(np.where((op.nodes > 0.3) & (op.nodes < 0.6), 1.0, 0.0))
    y = op.apply(xt)
    e = y.like(np.random.default_rng(9).standard_normal(61))
    pen = TV1D(50.0, DenoiseSettings(3000, 1e-9))
    tau = 2.0
    cfg = SolverConfig(tau=tau, mu0=2 * pen.c0 * (1 - 1 / tau), mu1=1.0, alpha0=0.01,
                       gamma0=0.6, gamma1=0.99, rho_hat=2.5)
    rec = run_linear(op, y + e * (1e-3 / e.norm()), 1e-3, pen, cfg, ground_truth=xt)
    D = rec.column("bregman")[: rec.n_delta + 1]
    assert np.all(np.diff(D) <= 1e-6 * (1 + abs(pen.value(xt))))


def test_run_record_csv(tmp_path):
    A, rng = _small_problem(10)
    rec = run_linear(A, A.range_signal(rng.standard_normal(8)), 0.5, SquaredNorm(),
                     SolverConfig(tau=2.0, mu0=0.5))
    path = tmp_path / "traj.csv"
    rec.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "n,alpha,t,residual_norm,rho,bregman"
    assert len(lines) == len(rec.trajectory) + 2
    assert lines[-1].startswith("# n_delta=")
    assert isinstance(rec, RunRecord)


# nonlinear --------------------------------------------------------------------

def test_linear_as_nonlinear_identical_trajectory():
    op = FredholmOperator(50)
    y = op.apply(op.domain_signal(np.sin(3 * op.nodes)))
    e = y.like(np.random.default_rng(11).standard_normal(51))
    yd = y + e * (1e-3 / e.norm())
    cfg = SolverConfig(tau=2.0, mu0=0.05, alpha0=0.01, gamma0=0.6)
    pen = ElasticNetL1(10)
    a = run_linear(op, yd, 1e-3, pen, cfg)
    b = run_nonlinear(LinearAsNonlinear(op), yd, 1e-3, pen, cfg)
    assert a.n_delta == b.n_delta
    for name in ("alpha", "t", "residual_norm", "rho"):
        np.testing.assert_allclose(a.column(name), b.column(name), rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(a.final_x.values, b.final_x.values, atol=1e-10)


def test_autoconv_exact_solution_start():
    F = AutoconvOperator(400)
    y = F.apply(F.domain_signal(np.ones(401)))
    pen = autoconv_tv_penalty()
    cfg = SolverConfig(tau=1.01, mu0=0.4 / 20, mu1=1.0, alpha0=1.0, gamma0=0.5, gamma1=0.99,
                       rho_hat=3.0, max_outer_iters=10)
    # xi_0 = 1/beta is a subgradient at x = 1, which already solves the problem
    rec = run_nonlinear(F, y, 0.0, pen, cfg, xi0=F.domain_signal(np.full(401, 1 / 20)))
    assert rec.n_delta == 0
    assert rec.termination is Termination.EXACT_DATA_RESIDUAL_ZERO


@pytest.mark.parametrize("level", [0.5 / 20, None])
def test_autoconv_residual_decreases(level):
    F = AutoconvOperator(400)
    y = F.apply(F.domain_signal(np.ones(401)))
    if level is None:
        pen, xi0, mu0 = SquaredNorm(), np.full(401, 0.05), 0.4
    else:
        pen, xi0, mu0 = autoconv_tv_penalty(), np.full(401, level), 0.4 / 20
    cfg = SolverConfig(tau=1.01, mu0=mu0, mu1=1.0, alpha0=1.0, gamma0=0.5, gamma1=0.99,
                       rho_hat=3.0, max_outer_iters=10)
    rec = run_nonlinear(F, y, 0.0, pen, cfg, xi0=F.domain_signal(xi0))
    r = rec.column("residual_norm")
    assert r.size == 11
    assert np.all(np.diff(r) <= 0)
