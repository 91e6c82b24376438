import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deepquench.errors import DomainError, InfeasibleStateError
from deepquench.potentials import (PiSpec, ProliferationSpec, QuenchWeight, P_eval, P_prime,
                                   g_eval, h_eval, h_prime, h_second, obstacle_subdiff_check,
                                   pi_eval, pi_prime, pi_second)

open_unit = st.floats(-0.999, 0.999, allow_nan=False)


def test_h_values():
    assert h_eval(0.0) == 0.0
    assert h_eval(1.0) == pytest.approx(2 * np.log(2), abs=1e-10)
    assert h_eval(-1.0) == pytest.approx(1.3862943611, abs=1e-10)
    assert h_eval(0.5) == pytest.approx(0.2616, abs=1e-4)
    assert h_prime(0.0) == 0.0
    assert h_prime(0.5) == pytest.approx(np.log(3), abs=1e-12)
    assert h_second(0.0) == 2.0


def test_h_domain():
    with pytest.raises(DomainError):
        h_eval(1.01)
    for f in (h_prime, h_second):
        with pytest.raises(DomainError):
            f(1.0)
        with pytest.raises(DomainError):
            f(np.array([0.0, -1.0]))


@settings(max_examples=50)
@given(open_unit, open_unit)
def test_h_shape(s, t):
    assert h_eval(s) == pytest.approx(h_eval(-s), abs=1e-14)
    assert h_eval(s) >= 0
    assert h_prime(-s) == pytest.approx(-h_prime(s), abs=1e-12)
    assert h_second(s) >= 2.0
    if s < t:
        assert h_prime(s) < h_prime(t)


@settings(max_examples=30)
@given(st.floats(-0.95, 0.95))
def test_h_derivatives_consistent(s):
    e = 1e-6
    assert (h_eval(s + e) - h_eval(s - e)) / (2 * e) == pytest.approx(h_prime(s), rel=1e-6, abs=1e-8)
    assert (h_prime(s + e) - h_prime(s - e)) / (2 * e) == pytest.approx(h_second(s), rel=1e-6)


def test_g():
    assert g_eval(1.0, QuenchWeight(1.0)) == 1.0
    assert g_eval(0.25, QuenchWeight(2.0)) == 0.0625
    with pytest.raises(DomainError):
        g_eval(0.0)
    with pytest.raises(DomainError):
        g_eval(1.5)
    with pytest.raises(DomainError):
        QuenchWeight(0.0)
    # g(gamma_n) h(s) -> 0 along gamma_n = 2^-n
    vals = [g_eval(2.0**-n, QuenchWeight(0.5)) * h_eval(1.0) for n in range(1, 40)]
    assert np.all(np.diff(vals) < 0) and vals[-1] < 1e-5


def test_pi_linear():
    spec = PiSpec()
    assert pi_eval(0.3, spec) == pytest.approx(-0.3)
    assert pi_prime(0.3, spec) == -1.0
    assert pi_second(0.3, spec) == 0.0
    assert PiSpec("linear", 2.0).lipschitz == 2.0


def test_pi_quartic_values():
    q = PiSpec("quartic-clamped")
    assert pi_eval(1.0, q) == 0.0
    assert pi_second(0.0, q) == 0.0
    assert pi_second(1.0, q) == 6.0
    assert pi_eval(0.5, q) == pytest.approx(0.125 - 0.5)


def test_pi_quartic_smooth_and_lipschitz():
    q = PiSpec("quartic-clamped")
    s = np.linspace(-5, 5, 20001)
    f, d, c = pi_eval(s, q), pi_prime(s, q), pi_second(s, q)
    # derivatives agree with finite differences everywhere, including the joins
    h = s[1] - s[0]
    assert np.max(np.abs(np.gradient(f, h)[1:-1] - d[1:-1])) < 1e-3
    assert np.max(np.abs(np.gradient(d, h)[1:-1] - c[1:-1])) < 1e-2
    # pi'' is continuous: no jumps at |s| = 2 or 3
    assert np.max(np.abs(np.diff(c))) < 20 * h
    assert np.all(np.abs(d) <= q.lipschitz + 1e-12)
    # odd function
    assert np.allclose(pi_eval(-s, q), -f)


def test_proliferation():
    P = ProliferationSpec("smoothstep", P0=2.0)
    assert P_eval(-1.0, P) == 0.0 and P_eval(-3.0, P) == 0.0
    assert P_eval(1.0, P) == 2.0 and P_eval(5.0, P) == 2.0
    assert P_eval(0.0, P) == pytest.approx(1.0)
    s = np.linspace(-2, 2, 4001)
    v = P_eval(s, P)
    assert np.all((v >= 0) & (v <= 2.0))
    assert np.all(np.abs(P_prime(s, P)) <= P.lipschitz + 1e-12)
    assert np.allclose(np.gradient(v, s[1] - s[0])[1:-1], P_prime(s, P)[1:-1], atol=1e-5)
    C = ProliferationSpec("constant", P0=0.7)
    assert np.all(P_eval(s, C) == 0.7) and np.all(P_prime(s, C) == 0.0)
    with pytest.raises(DomainError):
        ProliferationSpec(P0=-1.0)
    with pytest.raises(DomainError):
        ProliferationSpec("cubic")


def test_subdiff_check():
    phi = np.array([-1.0, -0.5, 0.2, 1.0])
    assert obstacle_subdiff_check(phi, np.array([-3.0, 0.0, 0.0, 2.0])).ok
    rep = obstacle_subdiff_check(phi, np.array([1.0, 0.1, 0.0, -2.0]))
    assert rep.n_violations == 3
    assert list(rep.cells) == [0, 1, 3]
    assert rep.max_violation == 2.0
    with pytest.raises(InfeasibleStateError):
        obstacle_subdiff_check(np.array([1.1]), np.array([0.0]))
