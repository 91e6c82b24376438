"""Reference problems used by the tests, the demos and the CLI.

``standard``
    Phase separation with contact: a linear pi of slope 2 pulls phi toward
    +-1 and the obstacle becomes active on part of the domain by t = 1.
    The quench weight g(gamma) = gamma^(1/4) decays slowly enough that the
    logarithmic barrier can still hold the contact force inside the
    Newton clamp at gamma = 2^-7.
``quench``
    Interior phase field, steep quench weight g = gamma^3 and a strongly
    weighted control cost.  The deep-quench continuation contracts fast
    on this problem, which makes it the test bed for the control and
    slackness diagnostics.
``homogeneous``
    Spatially constant data for comparisons with the ODE reduction.
"""

from __future__ import annotations

import numpy as np

from deepquench.mesh import Grid, TimeGrid
from deepquench.model import (ControlBounds, ModelParams, NewtonOptions, Problem,
                              TrackingTargets)
from deepquench.potentials import PiSpec, ProliferationSpec, QuenchWeight

STANDARD_WEIGHTS = dict(b0=0.01, b1=1.0, b2=0.5, b3=1.0, b4=0.5)
STANDARD_GAMMA = 0.25


def standard(nx: int = 64, Nt: int = 1000, T: float = 1.0, newton: NewtonOptions = None):
    """Return ``(problem, u_fixed)`` for the standard benchmark."""
    L = 4.0
    grid = Grid.interval(nx, L)
    x = grid.coordinates()
    profile = np.cos(np.pi * x / L)
    params = ModelParams(
        **STANDARD_WEIGHTS,
        pi=PiSpec("linear", slope=2.0),
        prolif=ProliferationSpec("smoothstep", P0=1.0),
        quench=QuenchWeight(0.25),
        targets=TrackingTargets(phiQ=-0.5 * profile, sigmaQ=0.5,
                                phiOmega=-0.5 * profile, sigmaOmega=0.5),
        bounds=ControlBounds(0.0, 1.0),
    )
    pb = Problem(grid, TimeGrid(T, Nt), params, mu0=np.zeros(nx),
                 phi0=0.7 * profile, sigma0=np.full(nx, 0.5),
                 newton=newton or NewtonOptions())
    return pb, pb.zero_control()


def quench(nx: int = 64, Nt: int = 1000, T: float = 1.0, newton: NewtonOptions = None):
    """Return ``(problem, u_init)`` for the deep-quench benchmark."""
    grid = Grid.interval(nx, 1.0)
    x = grid.coordinates()
    c = np.cos(np.pi * x)
    params = ModelParams(
        b0=10.0, b1=1.0, b2=0.5, b3=1.0, b4=0.5,
        pi=PiSpec("linear", slope=1.0),
        prolif=ProliferationSpec("smoothstep", P0=1.0),
        quench=QuenchWeight(3.0),
        targets=TrackingTargets(phiQ=0.3 * c, sigmaQ=0.6 + 0.4 * c,
                                phiOmega=0.3 * c, sigmaOmega=0.6 + 0.4 * c),
        bounds=ControlBounds(0.0, 0.03),
    )
    pb = Problem(grid, TimeGrid(T, Nt), params, mu0=np.zeros(nx),
                 phi0=np.full(nx, 0.3), sigma0=np.full(nx, 0.2),
                 newton=newton or NewtonOptions(tol=1e-12))
    return pb, pb.zero_control()


def homogeneous(nx: int = 64, Nt: int = 1000, T: float = 1.0, y0=(0.0, 0.2, 0.8),
                u: float = 0.5, params: ModelParams = None):
    """Return ``(problem, u)`` with constant data ``y0`` and constant control."""
    grid = Grid.interval(nx, 1.0)
    params = params or ModelParams(b0=1.0)
    mu0, phi0, s0 = (np.full(nx, float(v)) for v in y0)
    pb = Problem(grid, TimeGrid(T, Nt), params, mu0, phi0, s0)
    return pb, pb.constant_control(u)


def smooth_initial_phase(nx: int = 64, L: float = 8.0):
    """Grid and a smooth phi0 with max |phi0| = 0.9 for initial-data checks."""
    grid = Grid.interval(nx, L)
    return grid, 0.9 * np.cos(np.pi * grid.coordinates() / L)
