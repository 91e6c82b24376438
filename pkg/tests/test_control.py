from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from deepquench import benchmarks
from deepquench.control import (OptimizerOptions, QuenchSchedule, deep_quench, eval_adapted_cost,
                                eval_cost, evaluate, project_control, projected_gradient,
                                reduced_cost, stationarity_residual)
from deepquench.errors import InputError, OptimizerError
from deepquench.forward import solve_state_gamma
from deepquench.mesh import Grid, TimeGrid, inner_l2_time, norm_l2_time
from deepquench.model import ControlBounds, ModelParams, NewtonOptions, Problem

GAMMA = 0.25


def _quadratic(lo=-1.0, hi=1.0, b0=1.0):
    g = Grid.interval(8)
    params = ModelParams(b0=b0, bounds=ControlBounds(lo, hi))
    return Problem(g, TimeGrid(1.0, 10), params, np.zeros(8), np.zeros(8), np.zeros(8))


@pytest.fixture(scope="module")
def small():
    pb, _ = benchmarks.standard(nx=16, Nt=40, newton=NewtonOptions(tol=1e-13))
    return pb


def test_control_penalty_only():
    pb = _quadratic(b0=2.0)
    u = pb.constant_control(1.0)
    traj = solve_state_gamma(pb, u, 0.5)
    assert eval_cost(pb, traj, u) == pytest.approx(1.0, rel=1e-14)
    assert eval_adapted_cost(pb, traj, u, pb.zero_control()) == pytest.approx(1.5)
    assert eval_adapted_cost(pb, traj, u, u) == eval_cost(pb, traj, u)


def test_tracking_example():
    g = Grid.interval(4)
    pb = Problem(g, TimeGrid(1.0, 4), ModelParams(b3=2.0), np.zeros(4), np.zeros(4),
                 np.full(4, 0.5))
    traj = solve_state_gamma(pb, pb.zero_control(), 0.5)
    # only the sigma running term is weighted: J = (b3 / 2) ||sigma||^2 = ||sigma||^2
    ref = inner_l2_time(g, pb.tg, traj.sigma, traj.sigma)
    assert eval_cost(pb, traj, pb.zero_control()) == pytest.approx(ref)


def test_gradient_without_tracking_is_control():
    pb = _quadratic()
    u = np.random.default_rng(0).uniform(-1, 1, pb.control_shape)
    ev = evaluate(pb, 0.5, u)
    assert np.allclose(ev.grad, u, atol=1e-15)
    ad = evaluate(pb, 0.5, u, "adapted", u_ref=np.zeros_like(u))
    assert np.allclose(ad.grad, 2 * u)


def test_adapted_at_reference_is_plain(small):
    u = small.constant_control(0.4)
    a = evaluate(small, GAMMA, u)
    b = evaluate(small, GAMMA, u, "adapted", u_ref=u)
    assert a.cost == b.cost and np.array_equal(a.grad, b.grad)
    with pytest.raises(InputError):
        evaluate(small, GAMMA, u, "adapted")
    with pytest.raises(InputError):
        evaluate(small, GAMMA, u, "other")


@pytest.mark.parametrize("mode", ["plain", "adapted"])
def test_gradient_finite_differences(small, mode):
    rng = np.random.default_rng(5)
    u = rng.uniform(0.2, 0.8, small.control_shape)
    u_ref = rng.uniform(0.0, 1.0, small.control_shape) if mode == "adapted" else None
    grad = evaluate(small, GAMMA, u, mode, u_ref).grad
    e = 1e-5
    for _ in range(5):
        psi = rng.standard_normal(small.control_shape)
        fd = (reduced_cost(small, GAMMA, u + e * psi, mode, u_ref)
              - reduced_cost(small, GAMMA, u - e * psi, mode, u_ref)) / (2 * e)
        ad = inner_l2_time(small.grid, small.tg, grad, psi)
        assert abs(fd - ad) <= 1e-6 * max(abs(ad), 1e-12)


@settings(max_examples=40, deadline=None)
@given(arrays(float, (3, 4), elements=st.floats(-5, 5)), st.floats(-2, 0), st.floats(0, 2))
def test_projection(u, lo, hi):
    p = project_control(u, lo, hi)
    assert np.all((p >= lo) & (p <= hi))
    assert np.array_equal(project_control(p, lo, hi), p)
    inside = (u >= lo) & (u <= hi)
    assert np.array_equal(p[inside], u[inside])


def test_stationarity_examples():
    g, tg = Grid.interval(4), TimeGrid(1.0, 5)
    u = np.full((5, 4), 0.5)
    assert stationarity_residual(g, tg, u, np.zeros_like(u), 0.0, 1.0) == 0.0
    grad = np.full_like(u, 0.1)
    assert stationarity_residual(g, tg, u, grad, 0.0, 1.0) == pytest.approx(norm_l2_time(g, tg, grad))
    top = np.ones((5, 4))
    assert stationarity_residual(g, tg, top, -np.ones_like(top), 0.0, 1.0) == 0.0


def test_optimizer_options_validated():
    with pytest.raises(InputError):
        OptimizerOptions(armijo_c=1.5)
    with pytest.raises(InputError):
        OptimizerOptions(step0=0.0, mode="x")


def test_pg_stationary_start():
    pb = _quadratic()
    u, hist = projected_gradient(pb, 0.5, pb.zero_control())
    assert hist.converged and hist.iterations == 1 and np.all(u == 0)


def test_pg_quadratic_converges_to_zero():
    pb = _quadratic()
    u, hist = projected_gradient(pb, 0.5, pb.constant_control(0.5),
                                 OptimizerOptions(stat_tol=1e-12))
    assert hist.converged
    assert np.max(np.abs(u)) <= 1e-12


def test_pg_armijo_failure_reports_state():
    pb = _quadratic()
    u0 = pb.constant_control(0.5)
    with pytest.raises(OptimizerError) as exc:
        projected_gradient(pb, 0.5, u0, OptimizerOptions(step0=3.0, max_backtracks=1, bb=False))
    st_ = exc.value.state
    assert np.array_equal(st_["u"], u0) and st_["iteration"] == 1
    assert st_["cost"] == pytest.approx(0.125)


def test_pg_rejects_inadmissible_start():
    pb = _quadratic(0.0, 1.0)
    with pytest.raises(InputError):
        projected_gradient(pb, 0.5, pb.constant_control(2.0))


def test_pg_monotone(small):
    u, hist = projected_gradient(small, GAMMA, small.zero_control(),
                                 OptimizerOptions(max_outer_iters=8))
    assert np.all(np.diff(hist.costs) <= 0)
    assert np.all((u >= 0) & (u <= 1))
    assert hist.residuals[-1] < hist.residuals[0]


def test_single_level_quench_is_projected_gradient(small):
    opts = OptimizerOptions(max_outer_iters=4)
    rep = deep_quench(small, QuenchSchedule(GAMMA, 0.5, 1, opts))
    g0 = norm_l2_time(small.grid, small.tg, evaluate(small, GAMMA, small.zero_control()).grad)
    u, hist = projected_gradient(small, GAMMA, small.zero_control(),
                                 replace(opts, mode="adapted", stat_tol=1e-6 * g0),
                                 u_ref=small.zero_control())
    lv = rep.levels[0]
    assert np.array_equal(lv.u, u)
    assert lv.J == hist.final.plain_cost and lv.iterations == hist.iterations
    assert rep.grad0_norm == pytest.approx(g0) and rep.stat_tol == pytest.approx(1e-6 * g0)
    assert lv.gap >= 0 and lv.du == pytest.approx(norm_l2_time(small.grid, small.tg, u))


def test_weight_scaling(small):
    u = np.random.default_rng(9).uniform(0, 1, small.control_shape)
    a = evaluate(small, GAMMA, u)
    pb3 = Problem(small.grid, small.tg, small.params.scaled_weights(3.0), small.mu0,
                  small.phi0, small.sigma0, small.newton)
    b = evaluate(pb3, GAMMA, u)
    assert b.cost == pytest.approx(3 * a.cost, rel=1e-12)
    assert np.allclose(b.grad, 3 * a.grad, rtol=1e-10, atol=1e-14)


def test_quench_schedule():
    s = QuenchSchedule(0.5, 0.5, 3)
    assert s.gammas == [0.5, 0.25, 0.125]
    with pytest.raises(InputError):
        QuenchSchedule(ratio=1.0)
    with pytest.raises(InputError):
        QuenchSchedule(n_levels=2, options=[OptimizerOptions()])
