"""Nonlinearities of the state system.

All evaluators accept scalars or arrays and broadcast.  The logarithmic
``h`` and its derivatives raise :class:`DomainError` outside their domain
instead of returning inf/nan, so callers notice lost separation at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from deepquench.errors import DomainError, InfeasibleStateError

LN2 = float(np.log(2.0))


def h_eval(s):
    """Logarithmic potential (1-s)ln(1-s) + (1+s)ln(1+s), 2 ln 2 at +-1."""
    s = np.asarray(s, dtype=float)
    if np.any(np.abs(s) > 1.0) or np.any(np.isnan(s)):
        raise DomainError("h is defined on [-1, 1] only")
    inner = np.abs(s) < 1.0
    t = np.where(inner, s, 0.0)
    out = np.where(inner, (1.0 - t) * np.log1p(-t) + (1.0 + t) * np.log1p(t), 2.0 * LN2)
    out = np.maximum(out, 0.0)          # rounding near s = 0 can dip below zero
    return out[()] if out.ndim == 0 else out


def _open_interval(s, name):
    s = np.asarray(s, dtype=float)
    if np.any(np.abs(s) >= 1.0) or np.any(np.isnan(s)):
        raise DomainError(f"{name} needs |s| < 1 (separation lost)")
    return s


def h_prime(s):
    s = _open_interval(s, "h'")
    out = np.log1p(s) - np.log1p(-s)
    return out[()] if out.ndim == 0 else out


def h_second(s):
    s = _open_interval(s, "h''")
    out = 2.0 / ((1.0 - s) * (1.0 + s))
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class QuenchWeight:
    """Power-law weight g(gamma) = gamma**p."""

    p: float = 1.0

    def __post_init__(self):
        if not self.p > 0:
            raise DomainError(f"quench exponent must be positive, got {self.p}")

    def __call__(self, gamma: float) -> float:
        return g_eval(gamma, self)


def g_eval(gamma, w: QuenchWeight = QuenchWeight()) -> float:
    if not 0.0 < gamma <= 1.0:
        raise DomainError(f"gamma must lie in (0, 1], got {gamma}")
    return float(gamma) ** w.p


# Quartic branch s^3 - s is used on [-2, 2]; on 2 <= |s| <= 3 the second
# derivative ramps linearly to zero, beyond 3 the function is affine.
_Q_S0, _Q_S1 = 2.0, 3.0
_Q_F0, _Q_D0, _Q_C0 = 6.0, 11.0, 12.0          # value, slope, curvature at 2
_Q_L = _Q_S1 - _Q_S0
_Q_D1 = _Q_D0 + _Q_C0 * _Q_L / 2.0              # slope at 3
_Q_F1 = _Q_F0 + _Q_D0 * _Q_L + _Q_C0 * _Q_L**2 / 3.0


def _quartic(s, order):
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    sg = np.sign(s)
    z = np.clip(a - _Q_S0, 0.0, _Q_L)
    ramp = [
        _Q_F0 + _Q_D0 * z + _Q_C0 * (z**2 / 2.0 - z**3 / (6.0 * _Q_L)),
        _Q_D0 + _Q_C0 * (z - z**2 / (2.0 * _Q_L)),
        _Q_C0 * (1.0 - z / _Q_L),
    ]
    tail = [_Q_F1 + _Q_D1 * (a - _Q_S1), np.full_like(a, _Q_D1), np.zeros_like(a)]
    inner = [s**3 - s, 3.0 * s**2 - 1.0, 6.0 * s]
    out = np.where(a <= _Q_S0, inner[order],
                   np.where(a <= _Q_S1, ramp[order], tail[order]))
    if order != 1:                      # odd pieces were built on |s|
        out = np.where(a <= _Q_S0, out, sg * out)
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class PiSpec:
    """Smooth part pi of the potential derivative.

    ``linear``: pi(s) = -slope * s (slope 1 is the classical
    double-obstacle choice).  ``quartic-clamped``: s^3 - s on [-2, 2],
    continued as a C^2 function with bounded slope.
    """

    variant: str = "linear"
    slope: float = 1.0

    def __post_init__(self):
        if self.variant not in ("linear", "quartic-clamped"):
            raise DomainError(f"unknown pi variant {self.variant!r}")

    @property
    def lipschitz(self) -> float:
        return abs(self.slope) if self.variant == "linear" else _Q_D1

    def eval(self, s):
        return pi_eval(s, self)

    def prime(self, s):
        return pi_prime(s, self)

    def second(self, s):
        return pi_second(s, self)


def pi_eval(s, spec: PiSpec = PiSpec()):
    if spec.variant == "linear":
        return -spec.slope * np.asarray(s, dtype=float)
    return _quartic(s, 0)


def pi_prime(s, spec: PiSpec = PiSpec()):
    if spec.variant == "linear":
        return np.full_like(np.asarray(s, dtype=float), -spec.slope)
    return _quartic(s, 1)


def pi_second(s, spec: PiSpec = PiSpec()):
    if spec.variant == "linear":
        return np.zeros_like(np.asarray(s, dtype=float))
    return _quartic(s, 2)


def _smoothstep(x, order):
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    if order == 0:
        return x**3 * (10.0 - 15.0 * x + 6.0 * x**2)
    return 30.0 * x**2 * (1.0 - x) ** 2


@dataclass(frozen=True)
class ProliferationSpec:
    """Proliferation rate P.

    ``constant``: P = P0.  ``smoothstep``: P0 * S((s - center)/width + 1/2)
    with the quintic smoothstep S, so the default rises from 0 at s = -1
    to P0 at s = +1.
    """

    variant: str = "smoothstep"
    P0: float = 1.0
    width: float = 2.0
    center: float = 0.0

    def __post_init__(self):
        if self.variant not in ("constant", "smoothstep"):
            raise DomainError(f"unknown proliferation variant {self.variant!r}")
        if self.P0 < 0:
            raise DomainError("P0 must be nonnegative")
        if not self.width > 0:
            raise DomainError("transition width must be positive")

    @property
    def lipschitz(self) -> float:
        return 0.0 if self.variant == "constant" else 15.0 * self.P0 / (8.0 * self.width)

    def eval(self, s):
        return P_eval(s, self)

    def prime(self, s):
        return P_prime(s, self)


def P_eval(s, spec: ProliferationSpec = ProliferationSpec()):
    s = np.asarray(s, dtype=float)
    if spec.variant == "constant":
        out = np.full_like(s, spec.P0)
    else:
        out = spec.P0 * _smoothstep((s - spec.center) / spec.width + 0.5, 0)
    return out[()] if out.ndim == 0 else out


def P_prime(s, spec: ProliferationSpec = ProliferationSpec()):
    s = np.asarray(s, dtype=float)
    if spec.variant == "constant":
        out = np.zeros_like(s)
    else:
        out = spec.P0 / spec.width * _smoothstep((s - spec.center) / spec.width + 0.5, 1)
    return out[()] if out.ndim == 0 else out


@dataclass
class SubdiffReport:
    n_violations: int
    max_violation: float
    cells: np.ndarray = field(repr=False)

    @property
    def ok(self) -> bool:
        return self.n_violations == 0


def obstacle_subdiff_check(phi, xi, tol: float = 1e-8) -> SubdiffReport:
    """Check xi against the subdifferential of the indicator of [-1, 1].

    Interior cells need xi = 0, cells at +1 need xi >= 0, cells at -1 need
    xi <= 0, all up to ``tol``.
    """
    phi = np.asarray(phi, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if np.any(np.abs(phi) > 1.0 + tol):
        raise InfeasibleStateError(
            f"|phi| reaches {np.max(np.abs(phi)):.6g} > 1 + tol")
    upper = phi >= 1.0 - tol
    lower = phi <= -1.0 + tol
    interior = ~(upper | lower)
    viol = np.zeros_like(xi)
    viol[interior] = np.abs(xi[interior])
    viol[upper] = np.maximum(-xi[upper], 0.0)
    viol[lower] = np.maximum(xi[lower], 0.0)
    bad = viol > tol
    return SubdiffReport(int(bad.sum()), float(viol.max(initial=0.0)),
                         np.flatnonzero(bad))
