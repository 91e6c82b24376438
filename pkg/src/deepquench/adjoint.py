"""Directional state derivatives and the discrete adjoint.

Both are derived from the discrete forward map, not discretized
separately.  Writing one forward step as ``F(y_{k+1}, y_k, u_k) = 0`` with
Jacobians ``A_k = dF/dy_{k+1}`` and ``B_k = dF/dy_k``, the sensitivity
obeys ``A_k d_{k+1} = -B_k d_k + dt psi_k e_sigma`` and the multipliers
``w_k`` of the step equations obey

    A_Nt^T w_Nt = -dC_T/dy,
    A_k^T  w_k  = -dt dC/dy(y_k) - B_{k+1}^T w_{k+1},   k = Nt-1 .. 1.

The variables of the continuous adjoint are read off as ``p = -w_mu``,
``q = w_phi`` and ``r = -w_sigma``.  Row ``k < Nt`` of each adjoint series
holds the multiplier of the step from level ``k`` to ``k + 1``, so the
reduced gradient on the interval ``(t_k, t_{k+1}]`` is ``r_k + b0 u_k``.
Row ``Nt`` holds the terminal values ``p = 0``,
``q = -b2 (phi(T) - phi_Omega) / beta`` and ``r = b4 (sigma(T) - sigma_Omega)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import splu

from deepquench.errors import DomainError, InputError, StructuralError
from deepquench.forward import (StateTrajectory, StepOperator, apply_jac_old,
                                apply_jac_old_T, interleave, split)
from deepquench.mesh import Grid, TimeGrid, inner_l2_time
from deepquench.model import Problem
from deepquench.potentials import QuenchWeight, g_eval, h_second


@dataclass
class LinearizedTrajectory:
    eta: np.ndarray
    theta: np.ndarray
    rho: np.ndarray


@dataclass
class AdjointTrajectory:
    q: np.ndarray
    p: np.ndarray
    r: np.ndarray
    lam: np.ndarray
    phi_bar: np.ndarray       # phase field paired with each adjoint row


def _check_base(problem: Problem, base: StateTrajectory, gamma: float):
    if base.obstacle:
        raise InputError("sensitivities need a regularized (gamma > 0) trajectory")
    if base.gamma != gamma:
        raise StructuralError(f"base trajectory has gamma={base.gamma}, not {gamma}")
    if base.grid != problem.grid or base.tg != problem.tg:
        raise StructuralError("base trajectory lives on another grid")


def solve_linearized(problem: Problem, gamma: float, base: StateTrajectory,
                     psi) -> LinearizedTrajectory:
    """Derivative of the discrete state in the control direction ``psi``."""
    _check_base(problem, base, gamma)
    psi = problem.check_control(psi)
    grid, tg = problem.grid, problem.tg
    op = StepOperator(grid, problem.params, tg.dt)
    g = g_eval(gamma, problem.params.quench)
    zero = np.zeros(grid.size)
    d = np.zeros(3 * grid.size)
    out = np.zeros((tg.Nt + 1, 3 * grid.size))
    for k in range(tg.Nt):
        old, new = base.level(k), base.level(k + 1)
        B = op.jac_old_diagonals(old, new)
        rhs = -apply_jac_old(B, d) + tg.dt * interleave(zero, zero, psi[k])
        d = splu(op.jac_new(old[1], new[1], g)).solve(rhs)
        out[k + 1] = d
    return LinearizedTrajectory(out[:, 0::3], out[:, 1::3], out[:, 2::3])


def cost_state_gradients(problem: Problem, base: StateTrajectory):
    """Gradients of the tracking terms with respect to the state levels.

    Returns ``(running, terminal)``: ``running[k]`` is the interleaved
    gradient of the level-``k`` running integrand (without the ``dt``
    weight) and ``terminal`` that of the final-time terms.
    """
    p, t = problem.params, problem.targets
    zero = np.zeros_like(base.phi)
    running = np.empty((problem.tg.Nt + 1, 3 * problem.grid.size))
    running[:, 0::3] = zero
    running[:, 1::3] = p.b1 * (base.phi - t.phiQ)
    running[:, 2::3] = p.b3 * (base.sigma - t.sigmaQ)
    running[-1] = 0.0
    terminal = interleave(np.zeros(problem.grid.size),
                          p.b2 * (base.phi[-1] - t.phiOmega),
                          p.b4 * (base.sigma[-1] - t.sigmaOmega))
    return running, terminal


def solve_adjoint(problem: Problem, gamma: float, base: StateTrajectory) -> AdjointTrajectory:
    """Backward sweep with the transposed step Jacobians."""
    _check_base(problem, base, gamma)
    grid, tg, params = problem.grid, problem.tg, problem.params
    op = StepOperator(grid, params, tg.dt)
    g = g_eval(gamma, params.quench)
    running, terminal = cost_state_gradients(problem, base)
    n3 = 3 * grid.size
    w = np.zeros((tg.Nt + 1, n3))
    rhs = -terminal
    for k in range(tg.Nt, 0, -1):
        A = op.jac_new(base.phi[k - 1], base.phi[k], g)
        w[k] = splu(A).solve(rhs, trans="T")
        if k > 1:
            B = op.jac_old_diagonals(base.level(k - 1), base.level(k))
            rhs = -tg.dt * running[k - 1] - apply_jac_old_T(B, w[k])
    wm, wp, ws = split(w.T)
    # rows shifted so that row k is the multiplier of the step k -> k + 1
    p = np.vstack([-wm.T[1:], np.zeros((1, grid.size))])
    q = np.vstack([wp.T[1:], -params.b2 * (base.phi[-1] - problem.targets.phiOmega)[None] / params.beta])
    r = np.vstack([-ws.T[1:], params.b4 * (base.sigma[-1] - problem.targets.sigmaOmega)[None]])
    phi_bar = np.vstack([base.phi[1:], base.phi[-1:]])
    lam = compute_lambda(gamma, phi_bar, q, params.quench)
    return AdjointTrajectory(q, p, r, lam, phi_bar)


def compute_lambda(gamma: float, phi_bar, q, quench: QuenchWeight = QuenchWeight()):
    """Pointwise ``g(gamma) h''(phi_bar) q``."""
    phi_bar, q = np.asarray(phi_bar, dtype=float), np.asarray(q, dtype=float)
    if phi_bar.shape != q.shape:
        raise StructuralError("phi_bar and q must have the same shape")
    if np.any(np.abs(phi_bar) >= 1.0):
        raise DomainError("lambda needs |phi_bar| < 1")
    return g_eval(gamma, quench) * h_second(phi_bar) * q


def slackness_diagnostics(grid: Grid, tg: TimeGrid, lam, q, phi_bar, Phi=None):
    """Return ``(s1, s2)`` with s1 = int_Q lam q, s2 = int_Q lam (1 - phi^2) Phi.

    ``Phi`` is a state-shaped series vanishing at t = 0; the default is
    ``Phi(x, t) = t``.
    """
    if Phi is None:
        Phi = np.repeat(tg.times[:, None], grid.size, axis=1)
    Phi = np.asarray(Phi, dtype=float)
    if np.any(Phi[0] != 0.0):
        raise InputError("Phi must vanish at t = 0")
    s1 = inner_l2_time(grid, tg, lam, q)
    s2 = inner_l2_time(grid, tg, lam * (1.0 - np.asarray(phi_bar) ** 2), Phi)
    return s1, s2
