"""Time stepping of the regularized and obstacle state systems.

One implicit Euler step maps ``(mu, phi, sigma)_k`` to level ``k + 1``.
Proliferation ``P`` and the smooth potential part ``pi`` are frozen at
``phi_k``; the Laplacians and the logarithmic term ``g(gamma) h'(phi)`` are
implicit.  Every step solves the residual system

    F1 = alpha (mu' - mu) + (phi' - phi) - dt Lap mu' - dt P (sigma' - mu')
    F2 = beta (phi' - phi) + dt (-mu' - Lap phi' + g h'(phi') + pi(phi))
    F3 = (sigma' - sigma) - dt Lap sigma' + dt P (sigma' - mu') - dt u

for the new level.  Summing F1 and F3 and integrating cancels the
Laplacians and the exchange terms, which is the discrete mass balance.
The same residual, with ``g h'`` replaced by a selection ``xi`` of the
subdifferential of the indicator of [-1, 1], defines the obstacle step.

Unknowns are interleaved cell by cell, ``z[3i + c]``, so the Jacobian is
banded in 1-D.  :class:`StepOperator` supplies the Jacobians of the step
with respect to the new and old levels; the sensitivity and adjoint
solvers reuse them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from deepquench.errors import (ActiveSetError, NewtonError, SeparationError,
                               StructuralError, DomainError, NumericalError)
from deepquench.initdata import InitialData, make_initial_data
from deepquench.mesh import Grid, TimeGrid, h1_norm, integrate_space
from deepquench.model import ModelParams, NewtonOptions, Problem
from deepquench.potentials import g_eval, h_prime, h_second


def interleave(a, b, c):
    z = np.empty(3 * a.size)
    z[0::3], z[1::3], z[2::3] = a, b, c
    return z


def split(z):
    return z[0::3], z[1::3], z[2::3]


class StepOperator:
    """Residual and Jacobians of one implicit Euler step on a grid."""

    def __init__(self, grid: Grid, params: ModelParams, dt: float):
        self.grid, self.params, self.dt = grid, params, dt
        self.L = grid.laplacian_matrix
        n = grid.size
        coo = self.L.tocoo()
        d = np.arange(n)
        rows, cols, self._slots = [], [], []
        # (block row, block col, kind); kind "L" uses the Laplacian pattern
        layout = [(0, 0, "L"), (0, 0, "D"), (0, 1, "D"), (0, 2, "D"),
                  (1, 0, "D"), (1, 1, "L"), (1, 1, "D"),
                  (2, 0, "D"), (2, 2, "L"), (2, 2, "D")]
        for br, bc, kind in layout:
            ri, ci = (coo.row, coo.col) if kind == "L" else (d, d)
            rows.append(3 * ri + br)
            cols.append(3 * ci + bc)
        self._rows = np.concatenate(rows)
        self._cols = np.concatenate(cols)
        self._lval = coo.data
        self._ones = np.ones(n)
        self.n = n

    # -- coefficient helpers -------------------------------------------------
    def frozen(self, phi_old):
        pr, pi = self.params.prolif, self.params.pi
        return pr.eval(phi_old), pi.eval(phi_old)

    def residual(self, old, new, u, g=0.0, xi=None):
        """Interleaved residual; ``xi`` replaces ``g h'(phi')`` if given."""
        a, b, dt, L = self.params.alpha, self.params.beta, self.dt, self.L
        mu, phi, sg = old
        mu1, phi1, sg1 = new
        P, pi_old = self.frozen(phi)
        ex = P * (sg1 - mu1)
        F1 = a * (mu1 - mu) + (phi1 - phi) - dt * (L @ mu1) - dt * ex
        sel = g * h_prime(phi1) if xi is None else xi
        F2 = b * (phi1 - phi) + dt * (-mu1 - L @ phi1 + sel + pi_old)
        F3 = (sg1 - sg) - dt * (L @ sg1) + dt * ex - dt * u
        return interleave(F1, F2, F3)

    def jac_new(self, phi_old, phi_new, g=0.0) -> sp.csc_matrix:
        """Jacobian of the step residual with respect to the new level."""
        a, b, dt = self.params.alpha, self.params.beta, self.dt
        P = self.params.prolif.eval(phi_old)
        lv = -dt * self._lval
        d11 = b + (dt * g * h_second(phi_new) if g else 0.0) * self._ones
        data = np.concatenate([
            lv, a + dt * P, self._ones, -dt * P,
            -dt * self._ones, lv, d11,
            -dt * P, lv, 1.0 + dt * P,
        ])
        N = 3 * self.n
        return sp.csc_matrix((data, (self._rows, self._cols)), shape=(N, N))

    def jac_old_diagonals(self, old, new):
        """Cell-local Jacobian of the residual with respect to the old level.

        Returns a dict keyed by (residual row, variable) of diagonals; all
        other entries vanish.
        """
        a, b, dt = self.params.alpha, self.params.beta, self.dt
        pr, pi = self.params.prolif, self.params.pi
        phi = old[1]
        mu1, sg1 = new[0], new[2]
        dP = dt * pr.prime(phi) * (sg1 - mu1)
        return {
            (0, 0): -a * self._ones,
            (0, 1): -1.0 - dP,
            (1, 1): -b + dt * pi.prime(phi),
            (2, 1): dP,
            (2, 2): -self._ones,
        }


def apply_jac_old(D, v):
    """``J_old @ v`` for interleaved ``v``."""
    m, p, s = split(v)
    return interleave(D[0, 0] * m + D[0, 1] * p, D[1, 1] * p, D[2, 1] * p + D[2, 2] * s)


def apply_jac_old_T(D, w):
    """``J_old.T @ w`` for interleaved ``w``."""
    w1, w2, w3 = split(w)
    return interleave(D[0, 0] * w1, D[0, 1] * w1 + D[1, 1] * w2 + D[2, 1] * w3, D[2, 2] * w3)


@dataclass
class StepInfo:
    iters: int
    residual: float
    clamp_hits: int = 0


def _scale(old, u):
    return 1.0 + max(np.max(np.abs(np.concatenate(old))), np.max(np.abs(u), initial=0.0))


def step_gamma(op: StepOperator, old, u, gamma: float, opts: NewtonOptions = None,
               step: int | None = None):
    """Advance ``(mu, phi, sigma)`` by one step of the regularized system.

    Damped Newton on the coupled residual.  Trial iterates are clipped to
    ``|phi| <= opts.clamp(gamma)``; Armijo backtracking on the Euclidean
    residual norm accepts or halves the step.

    Returns the new triple and a :class:`StepInfo`.

    Raises
    ------
    NewtonError
        No convergence within ``opts.max_iters`` or line search failure.
    SeparationError
        The converged iterate sits on the clamp, or the line search stalls
        with the clamp binding.
    """
    opts = opts or NewtonOptions()
    g = g_eval(gamma, op.params.quench)
    cap = opts.clamp(gamma)
    if np.max(np.abs(old[1])) >= 1.0:
        raise DomainError("step_gamma needs |phi_k| < 1")
    scale = _scale(old, u)
    z = interleave(*old)
    z[1::3] = np.clip(z[1::3], -cap, cap)
    F = op.residual(old, split(z), u, g)
    fn = np.linalg.norm(F)
    clamped = False
    hits = 0
    for it in range(opts.max_iters + 1):
        res = np.max(np.abs(F)) / scale
        if res <= opts.tol:
            if clamped or np.any(np.abs(z[1::3]) >= cap):
                raise SeparationError(
                    f"separation clamp |phi| <= {cap} active at convergence",
                    residual=res, step=step)
            return split(z), StepInfo(it, res, hits)
        if it == opts.max_iters:
            break
        mu1, phi1, _ = split(z)
        lu = splu(op.jac_new(old[1], phi1, g))
        dz = lu.solve(-F)
        t = 1.0
        for _ in range(opts.max_backtracks):
            trial = z + t * dz
            ph = trial[1::3]
            over = np.abs(ph) > cap
            if over.any():
                trial[1::3] = np.clip(ph, -cap, cap)
            Ft = op.residual(old, split(trial), u, g)
            ftn = np.linalg.norm(Ft)
            if ftn <= (1.0 - opts.armijo * t) * fn or ftn == 0.0:
                break
            t *= opts.shrink
        else:
            if over.any() or np.any(np.abs(z[1::3]) >= cap):
                raise SeparationError(
                    f"line search stalled against the separation clamp |phi| <= {cap}",
                    residual=res, step=step)
            raise NewtonError("line search failed", residual=res, step=step)
        clamped = bool(over.any())
        hits += int(clamped)
        z, F, fn = trial, Ft, ftn
    raise NewtonError(f"no convergence in {opts.max_iters} iterations",
                      residual=res, step=step)


def step_obstacle(op: StepOperator, old, u, xi_guess=None, opts: NewtonOptions = None,
                  step: int | None = None):
    """One implicit Euler step of the double-obstacle system.

    With P and pi frozen the step is a linear complementarity problem in
    ``(mu', phi', sigma', xi)``; primal-dual active-set sweeps solve it
    exactly.  Returns the new triple, ``xi`` and the number of sweeps.
    """
    opts = opts or NewtonOptions()
    n, dt = op.n, op.dt
    zero = np.zeros(n)
    rhs = -op.residual(old, (zero, zero, zero), u, xi=zero)
    A = op.jac_new(old[1], zero, 0.0).tocsr()
    xi = np.zeros(n) if xi_guess is None else np.array(xi_guess, dtype=float)
    phi = np.array(old[1])
    c = 1.0
    up = xi + c * (phi - 1.0) > 0
    lo = xi + c * (phi + 1.0) < 0
    for sweep in range(1, opts.max_sweeps + 1):
        act = up | lo
        rows = 3 * np.flatnonzero(act) + 1
        keep = np.ones(3 * n)
        keep[rows] = 0.0
        M = sp.diags(keep) @ A + sp.csr_matrix(
            (np.ones(rows.size), (rows, rows)), shape=A.shape)
        b = rhs.copy()
        b[rows] = np.where(up[act], 1.0, -1.0)
        z = splu(M.tocsc()).solve(b)
        z[rows] = b[rows]
        xi = np.zeros(n)
        r2 = (rhs - A @ z)[1::3] / dt
        xi[act] = r2[act]
        phi = z[1::3]
        up_new = xi + c * (phi - 1.0) > 0
        lo_new = xi + c * (phi + 1.0) < 0
        if np.array_equal(up_new, up) and np.array_equal(lo_new, lo):
            return split(z), xi, sweep
        up, lo = up_new, lo_new
    raise ActiveSetError(f"active set not settled after {opts.max_sweeps} sweeps", step=step)


@dataclass
class StateTrajectory:
    grid: Grid
    tg: TimeGrid
    gamma: float | None                 # None marks the obstacle system
    g: float
    mu: np.ndarray
    phi: np.ndarray
    sigma: np.ndarray
    xi: np.ndarray | None = None
    newton_iters: np.ndarray = field(default=None, repr=False)
    residuals: np.ndarray = field(default=None, repr=False)

    @property
    def obstacle(self) -> bool:
        return self.gamma is None

    def level(self, k):
        return self.mu[k], self.phi[k], self.sigma[k]

    @property
    def phi_min(self) -> float:
        return float(self.phi.min())

    @property
    def phi_max(self) -> float:
        return float(self.phi.max())

    @property
    def max_abs_phi(self) -> float:
        return float(np.abs(self.phi).max())

    @property
    def max_abs_mu(self) -> float:
        return float(np.abs(self.mu).max())

    def monitored_norm(self) -> float:
        """Discrete analogue of the H1(H) + Linf(V) + L2(W) state norm.

        Sums, over mu, phi and sigma, the L2-in-time norm of the difference
        quotient, the max-in-time discrete H1 norm and the L2-in-time norm
        of ``y + Lap y`` components taken separately.
        """
        grid, dt = self.grid, self.tg.dt
        L = grid.laplacian_matrix
        vol = grid.cell_volume
        total = 0.0
        for y in (self.mu, self.phi, self.sigma):
            dty = np.diff(y, axis=0) / dt
            h1t = np.sqrt(dt * vol * np.sum(dty**2))
            linf_v = max(h1_norm(grid, yk) for yk in y)
            lap = (L @ y[1:].T).T
            l2w = np.sqrt(dt * vol * (np.sum(y[1:] ** 2) + np.sum(lap**2)))
            total += h1t + linf_v + l2w
        return float(total)

    def selection(self) -> np.ndarray:
        """Levels 1..Nt of g h'(phi) (gamma mode) or xi (obstacle mode)."""
        if self.obstacle:
            return self.xi[1:]
        return self.g * h_prime(self.phi[1:])

    def selection_norm(self) -> float:
        """L2(Q) norm of the selection over the implicit levels."""
        s = self.selection()
        return float(np.sqrt(self.tg.dt * self.grid.cell_volume * np.sum(s**2)))

    def log_rows(self):
        for k in range(self.tg.Nt):
            yield (k + 1, int(self.newton_iters[k]), float(self.residuals[k]),
                   float(self.phi[k + 1].min()), float(self.phi[k + 1].max()))


def _alloc(tg, n):
    return (np.empty((tg.Nt + 1, n)) for _ in range(3))


def solve_state_gamma(problem: Problem, u, gamma: float,
                      init: InitialData | None = None) -> StateTrajectory:
    """Integrate the regularized system from the gamma-approximated data.

    Raises the step's :class:`NumericalError` with its index on failure.
    """
    grid, tg, params = problem.grid, problem.tg, problem.params
    u = problem.check_control(u)
    if init is None:
        init = make_initial_data(grid, problem.mu0, problem.phi0, problem.sigma0, gamma)
    elif init.gamma != gamma:
        raise StructuralError(f"initial data built for gamma={init.gamma}, not {gamma}")
    op = StepOperator(grid, params, tg.dt)
    mu, phi, sg = _alloc(tg, grid.size)
    mu[0], phi[0], sg[0] = init.triple()
    iters = np.zeros(tg.Nt, dtype=int)
    res = np.zeros(tg.Nt)
    for k in range(tg.Nt):
        new, info = step_gamma(op, (mu[k], phi[k], sg[k]), u[k], gamma,
                               problem.newton, step=k)
        mu[k + 1], phi[k + 1], sg[k + 1] = new
        iters[k], res[k] = info.iters, info.residual
    return StateTrajectory(grid, tg, gamma, g_eval(gamma, params.quench),
                           mu, phi, sg, None, iters, res)


def solve_state_obstacle(problem: Problem, u) -> StateTrajectory:
    """Integrate the double-obstacle system from the base initial data."""
    grid, tg, params = problem.grid, problem.tg, problem.params
    u = problem.check_control(u)
    op = StepOperator(grid, params, tg.dt)
    mu, phi, sg = _alloc(tg, grid.size)
    xi = np.zeros((tg.Nt + 1, grid.size))
    mu[0], phi[0], sg[0] = problem.mu0, problem.phi0, problem.sigma0
    sweeps = np.zeros(tg.Nt, dtype=int)
    res = np.zeros(tg.Nt)
    for k in range(tg.Nt):
        old = (mu[k], phi[k], sg[k])
        new, xi[k + 1], sweeps[k] = step_obstacle(op, old, u[k], xi[k],
                                                  problem.newton, step=k)
        mu[k + 1], phi[k + 1], sg[k + 1] = new
        F = op.residual(old, new, u[k], xi=xi[k + 1])
        res[k] = np.max(np.abs(F)) / _scale(old, u[k])
    return StateTrajectory(grid, tg, None, 0.0, mu, phi, sg, xi, sweeps, res)


def mass_balance_residual(traj: StateTrajectory, u, alpha: float) -> np.ndarray:
    """Per-step defect of alpha*int(mu) + int(phi) + int(sigma) - dt*int(u)."""
    grid, dt = traj.grid, traj.tg.dt
    u = np.asarray(u, dtype=float)
    if u.shape != (traj.tg.Nt, grid.size):
        raise StructuralError("control shape does not match trajectory")
    vol = grid.cell_volume
    tot = (alpha * traj.mu.sum(axis=1) + traj.phi.sum(axis=1) + traj.sigma.sum(axis=1)) * vol
    return np.diff(tot) - dt * u.sum(axis=1) * vol


def ode_oracle(params: ModelParams, gamma: float, y0, u_path, tg: TimeGrid,
               substeps: int = 100) -> np.ndarray:
    """Spatially homogeneous reduction integrated with classical RK4.

    Solves ``alpha mu' + phi' = P(phi)(sigma - mu)``,
    ``beta phi' = mu - g h'(phi) - pi(phi)``,
    ``sigma' = -P(phi)(sigma - mu) + u`` with ``u`` constant on each
    interval of ``tg`` and ``substeps`` RK4 steps per interval.  Returns
    the ``(Nt + 1, 3)`` array of ``(mu, phi, sigma)`` at the levels of
    ``tg``.
    """
    a, b = params.alpha, params.beta
    g = g_eval(gamma, params.quench)
    Pf, pif = _scalar_P(params.prolif), _scalar_pi(params.pi)
    u_path = np.broadcast_to(np.asarray(u_path, dtype=float), (tg.Nt,))

    def rhs(y, uk):
        mu, phi, sg = y
        if not abs(phi) < 1.0:
            raise NumericalError("oracle phi left (-1, 1)")
        ex = Pf(phi) * (sg - mu)
        dphi = (mu - g * math.log((1.0 + phi) / (1.0 - phi)) - pif(phi)) / b
        return ((ex - dphi) / a, dphi, uk - ex)

    h = tg.dt / substeps
    out = np.empty((tg.Nt + 1, 3))
    y = tuple(float(v) for v in y0)
    out[0] = y
    for k in range(tg.Nt):
        uk = float(u_path[k])
        for _ in range(substeps):
            k1 = rhs(y, uk)
            k2 = rhs(tuple(yi + 0.5 * h * ki for yi, ki in zip(y, k1)), uk)
            k3 = rhs(tuple(yi + 0.5 * h * ki for yi, ki in zip(y, k2)), uk)
            k4 = rhs(tuple(yi + h * ki for yi, ki in zip(y, k3)), uk)
            y = tuple(yi + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
                      for yi, a1, a2, a3, a4 in zip(y, k1, k2, k3, k4))
        out[k + 1] = y
    return out


def _scalar_P(spec):
    """Float-only version of ``spec.eval`` (the oracle loop is scalar)."""
    if spec.variant == "constant":
        return lambda s: spec.P0
    P0, c, w = spec.P0, spec.center, spec.width

    def P(s):
        x = min(max((s - c) / w + 0.5, 0.0), 1.0)
        return P0 * x**3 * (10.0 - 15.0 * x + 6.0 * x * x)
    return P


def _scalar_pi(spec):
    if spec.variant == "linear":
        slope = spec.slope
        return lambda s: -slope * s
    return lambda s: float(spec.eval(s))
