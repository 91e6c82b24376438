"""Uniform cell-centered grids with homogeneous Neumann boundaries.

Fields are flat float64 arrays of length ``nx * ny`` in row-major order
(index ``j * nx + i``).  Time series of fields are 2-D arrays whose first
axis is the time level.  Mirrored ghost cells make the five-point Laplacian
self-adjoint in the cell-volume inner product and flux conservative.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from deepquench.errors import InputError, NumericalError, StructuralError


@dataclass(frozen=True)
class Grid:
    """Uniform box ``[0, nx*dx] x [0, ny*dy]`` split into cells.

    For ``dim == 1`` we keep ``ny == 1``; ``dy`` then only scales the
    cell volume and defaults to 1.
    """

    dim: int
    nx: int
    ny: int = 1
    dx: float = 1.0
    dy: float = 1.0

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise InputError(f"dim must be 1 or 2, got {self.dim}")
        if self.nx < 2:
            raise InputError(f"nx must be >= 2, got {self.nx}")
        if (self.dim == 1) != (self.ny == 1):
            raise InputError("ny == 1 exactly when dim == 1")
        if self.dim == 2 and self.ny < 2:
            raise InputError(f"ny must be >= 2, got {self.ny}")
        if not (self.dx > 0 and self.dy > 0):
            raise InputError("grid spacings must be positive")

    @classmethod
    def interval(cls, nx: int, length: float = 1.0) -> Grid:
        if nx < 2:
            raise InputError(f"nx must be >= 2, got {nx}")
        return cls(1, nx, 1, length / nx, 1.0)

    @classmethod
    def box(cls, nx: int, ny: int, lx: float = 1.0, ly: float = 1.0) -> Grid:
        if nx < 2 or ny < 2:
            raise InputError(f"nx and ny must be >= 2, got {nx} x {ny}")
        return cls(2, nx, ny, lx / nx, ly / ny)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def lx(self) -> float:
        return self.nx * self.dx

    @property
    def ly(self) -> float:
        return self.ny * self.dy

    @property
    def cell_volume(self) -> float:
        return self.dx * self.dy

    @property
    def volume(self) -> float:
        return self.size * self.cell_volume

    def coordinates(self):
        """Cell-center coordinates, flattened like fields.

        Returns ``x`` in 1-D and ``(x, y)`` in 2-D.
        """
        x = (np.arange(self.nx) + 0.5) * self.dx
        if self.dim == 1:
            return x
        y = (np.arange(self.ny) + 0.5) * self.dy
        X, Y = np.meshgrid(x, y)
        return X.ravel(), Y.ravel()

    def constant(self, value: float) -> np.ndarray:
        return np.full(self.size, float(value))

    def check(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != (self.size,):
            raise StructuralError(
                f"field has shape {f.shape}, grid expects ({self.size},)")
        return f

    @cached_property
    def laplacian_matrix(self) -> sp.csr_matrix:
        """Sparse matrix of :func:`laplacian_neumann`."""
        lx = _neumann_1d(self.nx, self.dx)
        if self.dim == 1:
            return lx.tocsr()
        ly = _neumann_1d(self.ny, self.dy)
        return (sp.kron(sp.identity(self.ny), lx)
                + sp.kron(ly, sp.identity(self.nx))).tocsr()


def _neumann_1d(n, h):
    main = np.full(n, -2.0)
    main[0] = main[-1] = -1.0
    off = np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1]) / h**2


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time axis ``t_k = k * dt`` for ``k = 0..Nt``."""

    T: float
    Nt: int

    def __post_init__(self):
        if not self.T > 0:
            raise InputError(f"T must be positive, got {self.T}")
        if self.Nt < 1:
            raise InputError(f"Nt must be >= 1, got {self.Nt}")

    @property
    def dt(self) -> float:
        return self.T / self.Nt

    @property
    def times(self) -> np.ndarray:
        t = np.arange(self.Nt + 1) * self.dt
        t[-1] = self.T
        return t

    def refined(self, factor: int = 2) -> TimeGrid:
        return TimeGrid(self.T, self.Nt * factor)


def laplacian_neumann(grid: Grid, f) -> np.ndarray:
    """Discrete Laplacian with mirrored ghost cells (zero normal flux)."""
    f = grid.check(f)
    u = f.reshape(grid.ny, grid.nx)
    p = np.pad(u, 1, mode="edge")
    out = (p[1:-1, :-2] - 2.0 * u + p[1:-1, 2:]) / grid.dx**2
    if grid.dim == 2:
        out += (p[:-2, 1:-1] - 2.0 * u + p[2:, 1:-1]) / grid.dy**2
    return out.ravel()


def integrate_space(grid: Grid, f) -> float:
    """Midpoint rule over the cells."""
    return float(np.sum(grid.check(f)) * grid.cell_volume)


def inner_l2(grid: Grid, f, g) -> float:
    f, g = grid.check(f), grid.check(g)
    return float(np.dot(f, g) * grid.cell_volume)


def _time_weights(n, tg):
    if n == tg.Nt:
        return np.full(n, tg.dt)
    if n == tg.Nt + 1:
        w = np.full(n, tg.dt)
        w[-1] = 0.0
        return w
    raise StructuralError(
        f"series of length {n} does not match Nt = {tg.Nt} (expected Nt or Nt+1)")


def inner_l2_time(grid: Grid, tg: TimeGrid, F, G) -> float:
    """L2(Q) pairing of two field series.

    Control-shaped series (``Nt`` rows, piecewise constant in time) are
    summed with weight ``dt``; state-shaped series (``Nt + 1`` rows) use the
    left-endpoint rule, so the final level carries no weight.
    """
    F, G = np.asarray(F, dtype=float), np.asarray(G, dtype=float)
    if F.shape != G.shape:
        raise StructuralError(f"shape mismatch {F.shape} vs {G.shape}")
    if F.ndim != 2 or F.shape[1] != grid.size:
        raise StructuralError(f"expected (n_levels, {grid.size}), got {F.shape}")
    w = _time_weights(F.shape[0], tg)
    return float(np.einsum("k,ki,ki->", w, F, G) * grid.cell_volume)


def norm_l2_time(grid: Grid, tg: TimeGrid, F) -> float:
    return float(np.sqrt(max(inner_l2_time(grid, tg, F, F), 0.0)))


def gradient_energy(grid: Grid, f) -> float:
    """Squared L2 norm of face differences, equal to -<Lap f, f>."""
    u = grid.check(f).reshape(grid.ny, grid.nx)
    e = np.sum(np.diff(u, axis=1) ** 2) / grid.dx**2
    if grid.dim == 2:
        e += np.sum(np.diff(u, axis=0) ** 2) / grid.dy**2
    return float(e * grid.cell_volume)


def h1_norm(grid: Grid, f) -> float:
    """Discrete H1 norm: sqrt(||f||^2 + ||grad f||^2)."""
    return float(np.sqrt(inner_l2(grid, f, f) + gradient_energy(grid, f)))


def conjugate_gradient(apply, b, x0=None, rtol=1e-10, maxiter=None,
                       inner=np.dot):
    """Conjugate gradients for a symmetric positive-definite operator.

    Stops once ``||b - A x|| <= rtol * ||b||``.  A zero right-hand side
    returns zero immediately.

    Raises
    ------
    NumericalError
        If the tolerance is not reached in ``maxiter`` iterations; the
        relative residual is attached.
    """
    b = np.asarray(b, dtype=float)
    n = b.size
    maxiter = 10 * n if maxiter is None else maxiter
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.sqrt(inner(b, b))
    if bnorm == 0.0:
        return np.zeros_like(b)
    r = b - apply(x)
    d = r.copy()
    rr = inner(r, r)
    for _ in range(maxiter):
        if np.sqrt(rr) <= rtol * bnorm:
            return x
        Ad = apply(d)
        a = rr / inner(d, Ad)
        x += a * d
        r -= a * Ad
        rr_new = inner(r, r)
        d = r + (rr_new / rr) * d
        rr = rr_new
    res = np.sqrt(rr) / bnorm
    if res <= rtol:
        return x
    raise NumericalError("conjugate gradient did not converge", residual=res)
