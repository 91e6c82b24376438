"""Tracking costs, reduced gradients and the deep-quench driver.

All L2(Q) quantities use the module quadratures: control-shaped series on
the ``Nt`` intervals, state series by the left-endpoint rule.  A reduced
gradient is returned as the Riesz representative in L2(Q), i.e. the
integrand ``r + b0 u`` (plus ``u - u_ref`` in adapted mode), so that
``<grad, psi>`` is the directional derivative of the reduced cost.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from deepquench.adjoint import AdjointTrajectory, slackness_diagnostics, solve_adjoint
from deepquench.errors import InputError, NumericalError, OptimizerError, StructuralError
from deepquench.forward import StateTrajectory, solve_state_gamma
from deepquench.mesh import Grid, TimeGrid, inner_l2_time, norm_l2_time
from deepquench.model import Problem

log = logging.getLogger(__name__)

MODES = ("plain", "adapted")


# -- costs -------------------------------------------------------------------

def eval_cost(problem: Problem, traj: StateTrajectory, u) -> float:
    """Tracking cost plus the ``b0/2`` control penalty."""
    grid, tg, p, t = problem.grid, problem.tg, problem.params, problem.targets
    u = problem.check_control(u)
    if traj.phi.shape != (tg.Nt + 1, grid.size):
        raise StructuralError("trajectory does not match the problem grid")
    dphi, dsig = traj.phi - t.phiQ, traj.sigma - t.sigmaQ
    eT_phi, eT_sig = traj.phi[-1] - t.phiOmega, traj.sigma[-1] - t.sigmaOmega
    vol = grid.cell_volume
    J = 0.0
    if p.b1:
        J += 0.5 * p.b1 * inner_l2_time(grid, tg, dphi, dphi)
    if p.b2:
        J += 0.5 * p.b2 * vol * float(eT_phi @ eT_phi)
    if p.b3:
        J += 0.5 * p.b3 * inner_l2_time(grid, tg, dsig, dsig)
    if p.b4:
        J += 0.5 * p.b4 * vol * float(eT_sig @ eT_sig)
    if p.b0:
        J += 0.5 * p.b0 * inner_l2_time(grid, tg, u, u)
    return J


def eval_adapted_cost(problem: Problem, traj: StateTrajectory, u, u_ref) -> float:
    u, u_ref = problem.check_control(u), problem.check_control(u_ref)
    d = u - u_ref
    return eval_cost(problem, traj, u) + 0.5 * inner_l2_time(problem.grid, problem.tg, d, d)


@dataclass
class Evaluation:
    """Cost, state, adjoint and gradients at one control."""

    u: np.ndarray
    cost: float                  # cost of the requested mode
    plain_cost: float
    grad: np.ndarray             # gradient of the requested mode
    plain_grad: np.ndarray
    traj: StateTrajectory
    adjoint: AdjointTrajectory | None


def _mode(mode, u_ref):
    if mode not in MODES:
        raise InputError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "adapted" and u_ref is None:
        raise InputError("adapted mode needs a reference control")


def evaluate(problem: Problem, gamma: float, u, mode: str = "plain", u_ref=None,
             with_gradient: bool = True) -> Evaluation:
    """State solve, cost and (optionally) adjoint gradient at ``u``."""
    _mode(mode, u_ref)
    u = problem.check_control(u)
    traj = solve_state_gamma(problem, u, gamma)
    J = eval_cost(problem, traj, u)
    Jm, extra = J, None
    if mode == "adapted":
        u_ref = problem.check_control(u_ref)
        extra = u - u_ref
        Jm = J + 0.5 * inner_l2_time(problem.grid, problem.tg, extra, extra)
    if not with_gradient:
        return Evaluation(u, Jm, J, None, None, traj, None)
    adj = solve_adjoint(problem, gamma, traj)
    g_plain = adj.r[:-1] + problem.params.b0 * u
    g = g_plain if extra is None else g_plain + extra
    return Evaluation(u, Jm, J, g, g_plain, traj, adj)


def reduced_cost(problem: Problem, gamma: float, u, mode: str = "plain", u_ref=None) -> float:
    return evaluate(problem, gamma, u, mode, u_ref, with_gradient=False).cost


def reduced_gradient(problem: Problem, gamma: float, u, mode: str = "plain",
                     u_ref=None) -> np.ndarray:
    """L2(Q) gradient of the reduced (plain or adapted) cost."""
    return evaluate(problem, gamma, u, mode, u_ref).grad


# -- optimality residuals ----------------------------------------------------

def project_control(u, u_min, u_max) -> np.ndarray:
    """Pointwise clamp onto the admissible box."""
    return np.minimum(np.maximum(np.asarray(u, dtype=float), u_min), u_max)


def stationarity_residual(grid: Grid, tg: TimeGrid, u, grad, u_min, u_max) -> float:
    """``||u - P(u - grad)||`` in L2(Q); zero exactly at VI points."""
    u, grad = np.asarray(u, dtype=float), np.asarray(grad, dtype=float)
    if u.shape != grad.shape:
        raise StructuralError(f"shape mismatch {u.shape} vs {grad.shape}")
    return norm_l2_time(grid, tg, u - project_control(u - grad, u_min, u_max))


def projection_residual(problem: Problem, u, r) -> float:
    """``||u - P(-r / b0)||`` in L2(Q) for the plain problem with b0 > 0."""
    b0 = problem.params.b0
    if not b0 > 0:
        raise InputError("the projection identity needs b0 > 0")
    v = project_control(-np.asarray(r) / b0, problem.u_min, problem.u_max)
    return norm_l2_time(problem.grid, problem.tg, np.asarray(u) - v)


# -- projected gradient ------------------------------------------------------

@dataclass
class OptimizerOptions:
    """Projected-gradient settings.

    ``stat_tol`` is absolute; when it is None the tolerance is
    ``stat_rtol * ||grad(u0)||``.  With ``bb`` the first trial step of each
    line search is the Barzilai-Borwein length of the previous step clipped
    to ``[step_min, step_max]``; acceptance remains monotone Armijo.
    """

    max_outer_iters: int = 200
    step0: float = 1.0
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    stat_tol: float | None = None
    stat_rtol: float = 1e-6
    mode: str = "plain"
    max_backtracks: int = 30
    bb: bool = True
    step_min: float = 1e-3
    step_max: float = 1e3

    def __post_init__(self):
        bad = []
        if not self.step0 > 0:
            bad.append("step0 must be > 0")
        if not 0 < self.armijo_c < 1:
            bad.append("armijo_c must lie in (0, 1)")
        if not 0 < self.armijo_shrink < 1:
            bad.append("armijo_shrink must lie in (0, 1)")
        if self.max_outer_iters < 1:
            bad.append("max_outer_iters must be >= 1")
        if self.stat_tol is not None and self.stat_tol < 0:
            bad.append("stat_tol must be >= 0")
        if self.mode not in MODES:
            bad.append(f"mode must be one of {MODES}")
        if bad:
            raise InputError("; ".join(bad))


@dataclass
class OptimizerHistory:
    costs: list = field(default_factory=list)          # accepted costs
    residuals: list = field(default_factory=list)      # stationarity residuals
    steps: list = field(default_factory=list)          # accepted step lengths
    backtracks: list = field(default_factory=list)
    stat_tol: float = 0.0
    converged: bool = False
    final: Evaluation | None = None

    @property
    def iterations(self) -> int:
        return len(self.costs)


def projected_gradient(problem: Problem, gamma: float, u0, opts: OptimizerOptions = None,
                       u_ref=None):
    """Minimize the reduced cost over the box by projected gradients.

    Returns ``(u, history)``.  The loop stops once the stationarity residual
    drops to the tolerance or after ``opts.max_outer_iters`` gradient
    evaluations.

    Raises
    ------
    OptimizerError
        The Armijo search ran out of backtracks; ``state`` holds the
        current control, cost, gradient and last trial step.
    """
    opts = opts or OptimizerOptions()
    u = problem.check_control(u0).copy()
    lo, hi = problem.u_min, problem.u_max
    if np.any(u < lo) or np.any(u > hi):
        raise InputError("initial control is not admissible")
    grid, tg = problem.grid, problem.tg
    ev = evaluate(problem, gamma, u, opts.mode, u_ref)
    hist = OptimizerHistory()
    hist.stat_tol = (opts.stat_tol if opts.stat_tol is not None
                     else opts.stat_rtol * norm_l2_time(grid, tg, ev.grad))
    tau = opts.step0
    for it in range(1, opts.max_outer_iters + 1):
        res = stationarity_residual(grid, tg, u, ev.grad, lo, hi)
        hist.costs.append(ev.cost)
        hist.residuals.append(res)
        log.debug("pg gamma=%g it=%d J=%.12e res=%.3e", gamma, it, ev.cost, res)
        if res <= hist.stat_tol:
            hist.converged = True
            break
        if it == opts.max_outer_iters:
            break
        t = tau
        for bt in range(opts.max_backtracks):
            trial = project_control(u - t * ev.grad, lo, hi)
            try:
                ev_new = evaluate(problem, gamma, trial, opts.mode, u_ref)
            except NumericalError:
                t *= opts.armijo_shrink
                continue
            slope = inner_l2_time(grid, tg, ev.grad, trial - u)
            if ev_new.cost <= ev.cost + opts.armijo_c * slope:
                break
            t *= opts.armijo_shrink
        else:
            raise OptimizerError(
                f"Armijo search failed after {opts.max_backtracks} backtracks",
                state={"u": u, "cost": ev.cost, "grad": ev.grad, "step": t,
                       "iteration": it}, residual=res)
        hist.steps.append(t)
        hist.backtracks.append(bt)
        tau = opts.step0
        if opts.bb:
            s, y = trial - u, ev_new.grad - ev.grad
            sy = inner_l2_time(grid, tg, s, y)
            if sy > 0:
                tau = float(np.clip(inner_l2_time(grid, tg, s, s) / sy,
                                    opts.step_min * opts.step0, opts.step_max * opts.step0))
        u, ev = trial, ev_new
    hist.final = ev
    return u, hist


# -- deep quench -------------------------------------------------------------

@dataclass
class QuenchSchedule:
    gamma0: float = 0.5
    ratio: float = 0.5
    n_levels: int = 7
    options: OptimizerOptions | list | None = None

    def __post_init__(self):
        if not 0 < self.gamma0 <= 1:
            raise InputError("gamma0 must lie in (0, 1]")
        if not 0 < self.ratio < 1:
            raise InputError("ratio must lie in (0, 1)")
        if self.n_levels < 1:
            raise InputError("n_levels must be >= 1")
        if isinstance(self.options, list) and len(self.options) != self.n_levels:
            raise InputError("one OptimizerOptions per level expected")

    @property
    def gammas(self):
        return [self.gamma0 * self.ratio**n for n in range(self.n_levels)]

    def options_for(self, n: int) -> OptimizerOptions:
        if isinstance(self.options, list):
            return self.options[n]
        return self.options or OptimizerOptions()


@dataclass
class QuenchLevel:
    gamma: float
    u: np.ndarray
    J: float = np.nan
    J_adapted: float = np.nan
    du: float = np.nan               # ||u_n - u_ref|| in L2(Q)
    stationarity: float = np.nan     # adapted problem
    vi_residual: float = np.nan      # plain problem
    projection_residual: float = np.nan
    phi_min: float = np.nan
    phi_max: float = np.nan
    s1: float = np.nan
    s2: float = np.nan
    iterations: int = 0
    converged: bool = False
    failed: str = ""

    @property
    def gap(self) -> float:
        return self.J_adapted - self.J

    CSV_FIELDS = ("level", "gamma", "J", "J_adapted", "gap", "du", "stationarity",
                  "vi_residual", "projection_residual", "phi_min", "phi_max",
                  "s1", "s2", "iterations", "converged", "failed")


@dataclass
class QuenchReport:
    levels: list
    stat_tol: float
    grad0_norm: float

    def column(self, name):
        return np.array([getattr(lv, name) for lv in self.levels], dtype=float)

    def rows(self):
        for n, lv in enumerate(self.levels):
            yield [n] + [getattr(lv, f) for f in QuenchLevel.CSV_FIELDS[1:]]


def deep_quench(problem: Problem, schedule: QuenchSchedule = None, u_init=None,
                Phi=None) -> QuenchReport:
    """Solve the adapted problems along ``gamma_n = gamma0 ratio^n``.

    Level ``n`` is centered at, and warm-started from, the optimizer of
    level ``n - 1`` (``u_init`` for the first level).  Unless the level
    options carry an absolute ``stat_tol``, every level uses
    ``stat_rtol * ||grad(u_init)||`` with the plain gradient at the first
    gamma, so that residuals are comparable across levels.
    """
    schedule = schedule or QuenchSchedule()
    u_ref = problem.zero_control() if u_init is None else problem.check_control(u_init).copy()
    u_ref = project_control(u_ref, problem.u_min, problem.u_max)
    grid, tg = problem.grid, problem.tg
    g0 = norm_l2_time(grid, tg, reduced_gradient(problem, schedule.gamma0, u_ref))
    levels, stat_tol = [], None
    for n, gamma in enumerate(schedule.gammas):
        base = schedule.options_for(n)
        tol = base.stat_tol if base.stat_tol is not None else base.stat_rtol * g0
        stat_tol = tol if stat_tol is None else stat_tol
        opts = OptimizerOptions(**{**base.__dict__, "mode": "adapted", "stat_tol": tol})
        lv = QuenchLevel(gamma, u_ref.copy())
        try:
            u, hist = projected_gradient(problem, gamma, u_ref, opts, u_ref=u_ref)
        except NumericalError as exc:
            lv.failed = str(exc)
            log.warning("level %d failed: %s", n, exc)
            levels.append(lv)
            continue
        ev = hist.final
        lv.u, lv.iterations, lv.converged = u, hist.iterations, hist.converged
        lv.J, lv.J_adapted = ev.plain_cost, ev.cost
        lv.du = norm_l2_time(grid, tg, u - u_ref)
        lv.stationarity = hist.residuals[-1]
        lv.vi_residual = stationarity_residual(grid, tg, u, ev.plain_grad,
                                               problem.u_min, problem.u_max)
        if problem.params.b0 > 0:
            lv.projection_residual = projection_residual(problem, u, ev.adjoint.r[:-1])
        lv.phi_min, lv.phi_max = ev.traj.phi_min, ev.traj.phi_max
        a = ev.adjoint
        lv.s1, lv.s2 = slackness_diagnostics(grid, tg, a.lam, a.q, a.phi_bar, Phi)
        log.info("level %d gamma=%g J=%.10e du=%.3e iters=%d", n, gamma, lv.J, lv.du,
                 lv.iterations)
        levels.append(lv)
        u_ref = u
    return QuenchReport(levels, stat_tol, g0)
