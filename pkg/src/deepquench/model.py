"""Model parameters, tracking targets, control bounds and problem bundles.

Controls are plain arrays of shape ``(Nt, n)``: ``u[k]`` acts on the time
interval ``(t_k, t_{k+1}]``.  State-shaped series have ``Nt + 1`` rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from deepquench.errors import InputError, StructuralError
from deepquench.mesh import Grid, TimeGrid
from deepquench.potentials import PiSpec, ProliferationSpec, QuenchWeight

Control = np.ndarray


def _series(value, grid, n_levels, name):
    a = np.asarray(value, dtype=float)
    try:
        a = np.broadcast_to(a if a.ndim != 1 or a.size != grid.size else a[None, :],
                            (n_levels, grid.size))
    except ValueError:
        raise StructuralError(
            f"{name}: cannot broadcast shape {np.shape(value)} to ({n_levels}, {grid.size})")
    if not np.all(np.isfinite(a)):
        raise InputError(f"{name} must be finite")
    return np.array(a)


def _field(value, grid, name):
    a = np.broadcast_to(np.asarray(value, dtype=float), (grid.size,))
    if not np.all(np.isfinite(a)):
        raise InputError(f"{name} must be finite")
    return np.array(a)


@dataclass
class TrackingTargets:
    """Targets of the tracking cost; scalars broadcast over space and time."""

    phiQ: object = 0.0
    sigmaQ: object = 0.0
    phiOmega: object = 0.0
    sigmaOmega: object = 0.0

    def resolve(self, grid: Grid, tg: TimeGrid) -> TrackingTargets:
        m = tg.Nt + 1
        return TrackingTargets(
            _series(self.phiQ, grid, m, "phiQ"),
            _series(self.sigmaQ, grid, m, "sigmaQ"),
            _field(self.phiOmega, grid, "phiOmega"),
            _field(self.sigmaOmega, grid, "sigmaOmega"),
        )


@dataclass
class ControlBounds:
    """Box ``u_min <= u <= u_max``; fields or series, scalars broadcast."""

    u_min: object = -np.inf
    u_max: object = np.inf

    def resolve(self, grid: Grid, tg: TimeGrid):
        lo = np.broadcast_to(np.asarray(self.u_min, dtype=float), (tg.Nt, grid.size))
        hi = np.broadcast_to(np.asarray(self.u_max, dtype=float), (tg.Nt, grid.size))
        if np.any(lo > hi):
            raise InputError("H2: u_min <= u_max must hold pointwise")
        return lo, hi


@dataclass
class ModelParams:
    alpha: float = 1.0
    beta: float = 1.0
    b0: float = 0.0
    b1: float = 0.0
    b2: float = 0.0
    b3: float = 0.0
    b4: float = 0.0
    pi: PiSpec = field(default_factory=PiSpec)
    prolif: ProliferationSpec = field(default_factory=ProliferationSpec)
    quench: QuenchWeight = field(default_factory=QuenchWeight)
    targets: TrackingTargets = field(default_factory=TrackingTargets)
    bounds: ControlBounds = field(default_factory=ControlBounds)

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise InputError("; ".join(problems))

    def violations(self):
        out = []
        if not self.alpha > 0:
            out.append("H3: alpha must be > 0")
        if not self.beta > 0:
            out.append("H3: beta must be > 0")
        b = [self.b0, self.b1, self.b2, self.b3, self.b4]
        if any(x < 0 for x in b):
            out.append("H1: cost weights b0..b4 must be nonnegative")
        elif all(x == 0 for x in b):
            out.append("H1: cost weights b0..b4 must not all be zero")
        return out

    @property
    def tracking_weights(self):
        return (self.b1, self.b2, self.b3, self.b4)

    def scaled_weights(self, c: float) -> ModelParams:
        return replace(self, b0=c * self.b0, b1=c * self.b1, b2=c * self.b2,
                       b3=c * self.b3, b4=c * self.b4)


@dataclass
class NewtonOptions:
    """Per-step nonlinear solver settings."""

    tol: float = 1e-10
    max_iters: int = 50
    armijo: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 40
    max_sweeps: int = 100           # active-set sweeps in obstacle mode

    def clamp(self, gamma: float) -> float:
        """Largest |phi| an iterate may take inside the line search."""
        return 1.0 - min(gamma / 4.0, 1e-3)


@dataclass
class Problem:
    """Everything needed to map a control to a cost.

    ``mu0, phi0, sigma0`` are the base initial data; the gamma-dependent
    approximants are built on demand.
    """

    grid: Grid
    tg: TimeGrid
    params: ModelParams
    mu0: np.ndarray
    phi0: np.ndarray
    sigma0: np.ndarray
    newton: NewtonOptions = field(default_factory=NewtonOptions)

    def __post_init__(self):
        self.mu0 = _field(self.mu0, self.grid, "mu0")
        self.phi0 = _field(self.phi0, self.grid, "phi0")
        self.sigma0 = _field(self.sigma0, self.grid, "sigma0")
        if np.any(np.abs(self.phi0) > 1.0):
            raise InputError("H7: |phi0| <= 1 must hold")
        self.targets = self.params.targets.resolve(self.grid, self.tg)
        self.u_min, self.u_max = self.params.bounds.resolve(self.grid, self.tg)

    @property
    def control_shape(self):
        return (self.tg.Nt, self.grid.size)

    def zero_control(self) -> np.ndarray:
        return np.zeros(self.control_shape)

    def constant_control(self, value: float) -> np.ndarray:
        return np.full(self.control_shape, float(value))

    def check_control(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != self.control_shape:
            raise StructuralError(
                f"control has shape {u.shape}, expected {self.control_shape}")
        return u

    def with_params(self, params: ModelParams) -> Problem:
        return replace(self, params=params)
