"""Command-line entry points.

Usage::

    deepquench SUBCOMMAND --config PATH [--out DIR] [options]

Exit codes: 0 success, 1 invalid input (configuration, hypotheses,
files), 2 numerical failure, 64 usage error (unknown subcommand or
flags).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from deepquench import io
from deepquench.adjoint import slackness_diagnostics, solve_adjoint
from deepquench.control import (deep_quench, evaluate, projected_gradient,
                                stationarity_residual)
from deepquench.errors import InputError, NumericalError
from deepquench.forward import (mass_balance_residual, ode_oracle, solve_state_gamma,
                                solve_state_obstacle)
from deepquench.initdata import make_initial_data
from deepquench.mesh import TimeGrid, inner_l2_time, norm_l2_time
from deepquench.potentials import obstacle_subdiff_check

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2, 64

SUBCOMMANDS = ("simulate", "simulate-obstacle", "make-init", "adjoint", "grad-check",
               "optimize", "quench", "oracle-ode")

log = logging.getLogger("deepquench")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _parser():
    p = _Parser(prog="deepquench", description="Deep-quench optimal control pipeline.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)
    helps = {
        "simulate": "integrate the regularized state system at control.gamma",
        "simulate-obstacle": "integrate the double-obstacle state system",
        "make-init": "write the gamma-approximated initial data",
        "adjoint": "state + adjoint solve, lambda field and slackness diagnostics",
        "grad-check": "adjoint gradient against central finite differences",
        "optimize": "projected-gradient solve at control.gamma",
        "quench": "deep-quench continuation over the gamma schedule",
        "oracle-ode": "spatially homogeneous ODE oracle vs. the field solver",
    }
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, help=helps[name])
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--out", type=Path, default=None,
                        help="output directory (default: output.dir from the config)")
        if name == "grad-check":
            sp.add_argument("--seeds", type=int, default=5)
    return p


# -- output helpers ----------------------------------------------------------

def _series_out(out: Path, name, series, grid, times):
    (out / f"{name}.dqf").write_bytes(io.write_series(series, grid, times))


def _control_out(out: Path, name, u, problem):
    _series_out(out, name, u, problem.grid, problem.tg.times[:-1])


def _summary(out: Path, pairs, name="summary.csv"):
    io.write_csv(out / name, [k for k, _ in pairs], [[v for _, v in pairs]])


def _state_outputs(out, problem, traj, u):
    tg, grid = problem.tg, problem.grid
    for nm in ("mu", "phi", "sigma"):
        _series_out(out, nm, getattr(traj, nm), grid, tg.times)
    io.write_csv(out / "steps.csv", ["step", "iters", "residual", "phi_min", "phi_max"],
                 traj.log_rows())
    mb = mass_balance_residual(traj, u, problem.params.alpha)
    return [("phi_min", traj.phi_min), ("phi_max", traj.phi_max),
            ("max_abs_mu", traj.max_abs_mu), ("monitored_norm", traj.monitored_norm()),
            ("selection_norm", traj.selection_norm()),
            ("mass_balance_max", float(np.max(np.abs(mb))))]


# -- subcommands -------------------------------------------------------------

def cmd_simulate(cfg, out, args):
    pb = io.build_problem(cfg)
    u = io.build_control(cfg, pb)
    gamma = cfg["control.gamma"]
    traj = solve_state_gamma(pb, u, gamma)
    _summary(out, [("gamma", gamma)] + _state_outputs(out, pb, traj, u))


def cmd_simulate_obstacle(cfg, out, args):
    pb = io.build_problem(cfg)
    u = io.build_control(cfg, pb)
    traj = solve_state_obstacle(pb, u)
    _series_out(out, "xi", traj.xi, pb.grid, pb.tg.times)
    rep = obstacle_subdiff_check(traj.phi, traj.xi)
    _summary(out, _state_outputs(out, pb, traj, u)
             + [("subdiff_violations", rep.n_violations),
                ("subdiff_max_violation", rep.max_violation),
                ("active_fraction", float(np.mean(np.abs(traj.phi[1:]) >= 1.0)))])
    if not rep.ok:
        raise NumericalError(f"obstacle trajectory fails the subdifferential check "
                             f"({rep.n_violations} cells)")


def cmd_make_init(cfg, out, args):
    pb = io.build_problem(cfg)
    gamma = cfg["control.gamma"]
    init = make_initial_data(pb.grid, pb.mu0, pb.phi0, pb.sigma0, gamma)
    for nm in ("mu0g", "phi0g", "sigma0g"):
        (out / f"{nm}.dqf").write_bytes(io.write_snapshot(getattr(init, nm), pb.grid))
    from deepquench.mesh import h1_norm
    _summary(out, [("gamma", gamma),
                   ("phi0g_max_abs", float(np.max(np.abs(init.phi0g)))),
                   ("bound", 1.0 - gamma / 2.0),
                   ("h1_distance", h1_norm(pb.grid, init.phi0g - init.phi0)),
                   ("h1_phi0g", h1_norm(pb.grid, init.phi0g)),
                   ("h1_phi0_clamped", h1_norm(pb.grid, init.phi0_clamped))])


def cmd_adjoint(cfg, out, args):
    pb = io.build_problem(cfg)
    u = io.build_control(cfg, pb)
    gamma = cfg["control.gamma"]
    traj = solve_state_gamma(pb, u, gamma)
    adj = solve_adjoint(pb, gamma, traj)
    for nm, s in (("q", adj.q), ("p", adj.p), ("r", adj.r), ("lambda", adj.lam)):
        _series_out(out, nm, s, pb.grid, pb.tg.times)
    s1, s2 = slackness_diagnostics(pb.grid, pb.tg, adj.lam, adj.q, adj.phi_bar)
    io.write_csv(out / "diagnostics.csv", ["gamma", "s1", "s2"], [[gamma, s1, s2]])


def cmd_grad_check(cfg, out, args):
    pb = io.build_problem(cfg, newton_tol=cfg["check.newton_tol"])
    u = io.build_control(cfg, pb)
    gamma, eps, rtol = cfg["control.gamma"], cfg["check.eps"], cfg["check.rtol"]
    mode = cfg["optimizer.mode"]
    rng = np.random.default_rng(cfg["check.seed"])
    u_ref = u + 0.1 * rng.standard_normal(u.shape) if mode == "adapted" else None
    ev = evaluate(pb, gamma, u, mode, u_ref)
    rows, worst = [], 0.0
    for seed in range(args.seeds):
        psi = np.random.default_rng(seed).standard_normal(u.shape)
        ad = inner_l2_time(pb.grid, pb.tg, ev.grad, psi)
        jp = evaluate(pb, gamma, u + eps * psi, mode, u_ref, False).cost
        jm = evaluate(pb, gamma, u - eps * psi, mode, u_ref, False).cost
        fd = (jp - jm) / (2 * eps)
        rel = abs(ad - fd) / abs(ad) if ad != 0 else abs(fd)
        worst = max(worst, rel)
        rows.append([seed, mode, ad, fd, rel, rel <= rtol])
    io.write_csv(out / "gradcheck.csv",
                 ["seed", "mode", "adjoint", "finite_difference", "rel_error", "pass"], rows)
    if worst > rtol:
        raise NumericalError(f"gradient check failed: worst relative error {worst:.3e} > {rtol}")


def cmd_optimize(cfg, out, args):
    pb = io.build_problem(cfg)
    u0 = io.build_control(cfg, pb)
    gamma = cfg["control.gamma"]
    opts = io.build_optimizer_options(cfg)
    u_ref = u0 if opts.mode == "adapted" else None
    u, hist = projected_gradient(pb, gamma, u0, opts, u_ref=u_ref)
    io.write_csv(out / "history.csv", ["iteration", "cost", "stationarity"],
                 [[i + 1, c, r] for i, (c, r) in enumerate(zip(hist.costs, hist.residuals))])
    _control_out(out, "control", u, pb)
    ev = hist.final
    _summary(out, [("gamma", gamma), ("cost", ev.cost), ("iterations", hist.iterations),
                   ("converged", hist.converged), ("stat_tol", hist.stat_tol),
                   ("stationarity", hist.residuals[-1]),
                   ("vi_residual", stationarity_residual(pb.grid, pb.tg, u, ev.plain_grad,
                                                         pb.u_min, pb.u_max))])


def cmd_quench(cfg, out, args):
    pb = io.build_problem(cfg)
    u0 = io.build_control(cfg, pb)
    rep = deep_quench(pb, io.build_schedule(cfg), u0)
    from deepquench.control import QuenchLevel
    io.write_csv(out / "quench_report.csv", QuenchLevel.CSV_FIELDS, rep.rows())
    for n, lv in enumerate(rep.levels):
        _control_out(out, f"control_level{n}", lv.u, pb)
    failed = [n for n, lv in enumerate(rep.levels) if lv.failed]
    if failed:
        raise NumericalError(f"quench levels {failed} failed")


def cmd_oracle_ode(cfg, out, args):
    pb = io.build_problem(cfg)
    u = io.build_control(cfg, pb)
    fields = (pb.mu0, pb.phi0, pb.sigma0, u)
    if any(np.ptp(f) != 0.0 for f in fields) or np.ptp(u, axis=0).any():
        raise InputError("oracle-ode needs spatially constant initial data and control")
    gamma = cfg["control.gamma"]
    traj = solve_state_gamma(pb, u, gamma)
    orc = ode_oracle(pb.params, gamma, (pb.mu0[0], pb.phi0[0], pb.sigma0[0]), u[:, 0], pb.tg)
    field_mean = np.stack([traj.mu.mean(axis=1), traj.phi.mean(axis=1),
                           traj.sigma.mean(axis=1)], axis=1)
    err = np.max(np.abs(field_mean - orc), axis=1)
    rows = [[t, *o, *f, e] for t, o, f, e in zip(pb.tg.times, orc, field_mean, err)]
    io.write_csv(out / "oracle.csv", ["t", "mu_ode", "phi_ode", "sigma_ode",
                                      "mu_field", "phi_field", "sigma_field", "max_error"], rows)
    _summary(out, [("gamma", gamma), ("dt", pb.tg.dt), ("max_error", float(err.max())),
                   ("spatial_spread", float(np.ptp(traj.phi, axis=1).max()))])


HANDLERS = {
    "simulate": cmd_simulate, "simulate-obstacle": cmd_simulate_obstacle,
    "make-init": cmd_make_init, "adjoint": cmd_adjoint, "grad-check": cmd_grad_check,
    "optimize": cmd_optimize, "quench": cmd_quench, "oracle-ode": cmd_oracle_ode,
}


def cli_dispatch(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _parser()
    try:
        if not argv or argv[0] not in SUBCOMMANDS and not argv[0].startswith("-"):
            raise UsageError(parser.format_help().rstrip()
                             + (f"\ndeepquench: unknown subcommand {argv[0]!r}" if argv else ""))
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help().rstrip())
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:          # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = io.load_config(args.config)
        out = args.out if args.out is not None else Path(cfg["output.dir"])
        out.mkdir(parents=True, exist_ok=True)
        HANDLERS[args.command](cfg, out, args)
    except InputError as exc:
        print(f"deepquench {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"deepquench {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"deepquench {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


def main():
    sys.exit(cli_dispatch())


if __name__ == "__main__":
    main()
