"""Gamma-dependent approximations of the initial data.

The chemical potential is truncated at level 1/gamma, the phase field is
clamped to ``[-(1 - gamma/2), 1 - gamma/2]`` and then smoothed by one
implicit diffusion step ``(I - gamma Lap) phi = phi_clamped``; the nutrient
is passed through untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from deepquench.errors import DomainError, InfeasibleStateError
from deepquench.mesh import Grid, conjugate_gradient, laplacian_neumann


def _check_gamma(gamma):
    if not 0.0 < gamma <= 1.0:
        raise DomainError(f"gamma must lie in (0, 1], got {gamma}")


def truncate_mu0(mu0, gamma: float) -> np.ndarray:
    _check_gamma(gamma)
    return np.clip(np.asarray(mu0, dtype=float), -1.0 / gamma, 1.0 / gamma)


def clamp_phi0(phi0, gamma: float) -> np.ndarray:
    _check_gamma(gamma)
    phi0 = np.asarray(phi0, dtype=float)
    if np.any(np.abs(phi0) > 1.0):
        raise InfeasibleStateError("H7: |phi0| <= 1 violated")
    level = 1.0 - gamma / 2.0
    return np.clip(phi0, -level, level)


def smooth_phi0(grid: Grid, phi0, gamma: float, rtol: float = 1e-10) -> np.ndarray:
    """Solve ``(I - gamma Lap_h) phi = clamp(phi0)`` by conjugate gradients.

    The discrete maximum principle keeps the result inside the clamp
    interval; the CG residual can push it out by rounding only, which we
    remove with a final clip.
    """
    target = clamp_phi0(grid.check(phi0), gamma)

    def apply(v):
        return v - gamma * laplacian_neumann(grid, v)

    phi = conjugate_gradient(apply, target, x0=target.copy(), rtol=rtol)
    return np.clip(phi, target.min(), target.max())


@dataclass
class InitialData:
    grid: Grid
    gamma: float
    mu0: np.ndarray
    phi0: np.ndarray
    sigma0: np.ndarray
    mu0g: np.ndarray
    phi0g: np.ndarray
    sigma0g: np.ndarray

    @property
    def phi0_clamped(self) -> np.ndarray:
        return clamp_phi0(self.phi0, self.gamma)

    def triple(self):
        return self.mu0g, self.phi0g, self.sigma0g


def make_initial_data(grid: Grid, mu0, phi0, sigma0, gamma: float) -> InitialData:
    mu0, phi0, sigma0 = grid.check(mu0), grid.check(phi0), grid.check(sigma0)
    return InitialData(
        grid, gamma, mu0, phi0, sigma0,
        truncate_mu0(mu0, gamma), smooth_phi0(grid, phi0, gamma), sigma0,
    )
