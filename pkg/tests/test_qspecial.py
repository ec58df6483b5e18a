import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coulombgas import qspecial as qs
from coulombgas.errors import DomainError, PoleError


def _mp_qpoch_log(z, q):
    """Direct high-precision sum of ``log(1 - z q^i)`` (mpmath's qp stalls for q near 1)."""
    with mp.workdps(40):
        z, q = mp.mpf(z), mp.mpf(q)
        total, i = mp.mpf(0), 0
        while abs(z) * q**i > mp.mpf(10) ** -35:
            total += mp.log(1 - z * q**i)
            i += 1
        return float(total)


def test_qpoch_finite_examples():
    assert qs.qpoch_finite(0.7, 0.4, 0) == 1.0
    assert qs.qpoch_finite(0.0, 0.4, 9) == 1.0
    assert qs.qpoch_finite(1.0, 0.4, 3) == 0.0
    assert qs.qpoch_finite(0.3, 0.5, 4) == pytest.approx(float(mp.qp(0.3, 0.5, 4)), rel=1e-14)


@pytest.mark.parametrize("z, q", [(-1.0, 0.5), (0.3, 0.9), (-5.0, 0.01), (-1e-3, 0.99), (0.99, 0.2)])
def test_qpoch_infinite_log_against_mpmath(z, q):
    assert qs.qpoch_infinite_log(z, q) == pytest.approx(_mp_qpoch_log(z, q), abs=1e-13)


def test_qpoch_infinite_log_edge_cases():
    assert qs.qpoch_infinite_log(0.0, 0.3) == 0.0
    prod = math.fsum(math.log1p(2.0**-i) for i in range(80))
    assert qs.qpoch_infinite_log(-1.0, 0.5) == pytest.approx(prod, abs=1e-14)
    with pytest.raises(PoleError):
        qs.qpoch_infinite_log(2.0, 0.5)
    with pytest.raises(DomainError):
        qs.qpoch_infinite_log(0.5, 1.0)


@pytest.mark.parametrize("z, q, n", [(0.4, 0.5, 0), (1.7, 0.3, 1), (0.3, 0.7, 20), (-1.2, 0.9, 40)])
def test_q_binomial(z, q, n):
    assert qs.q_binomial_check(z, q, n) <= 1e-11


def test_jacobi_theta():
    with mp.workdps(30):
        ref = float(mp.nsum(lambda l: mp.exp(-mp.pi * l * l), [-mp.inf, mp.inf]))
    assert qs.jacobi_theta(0.0, 1j).real == pytest.approx(ref, abs=1e-15)
    assert ref == pytest.approx(1.08643481, abs=1e-8)
    z, tau = 0.23 + 0.1j, 0.3 + 0.8j
    assert qs.jacobi_theta(z + 1, tau) == pytest.approx(qs.jacobi_theta(z, tau), abs=1e-13)
    # mpmath's jtheta(3, pi z, e^{i pi tau}) is the same series
    with mp.workdps(30):
        ref = complex(mp.jtheta(3, mp.pi * z, mp.exp(1j * mp.pi * tau)))
    assert qs.jacobi_theta(z, tau) == pytest.approx(ref, abs=1e-13)
    with pytest.raises(DomainError):
        qs.jacobi_theta(0.1, 1.0 + 0j)


def test_big_theta_bridge():
    assert qs.theta_bridge_residual(0.3, 0.6, 1.1) <= 1e-9
    # x = 0, q = 1: the two log terms vanish
    p = 0.4
    assert qs.big_theta(0.0, p, 1.0) == pytest.approx(
        qs.qpoch_infinite_log(-1.0, p * p) + qs.qpoch_infinite_log(-p * p, p * p), abs=1e-15
    )


@settings(max_examples=50, deadline=None)
@given(x=st.floats(0.0, 1.0), p=st.floats(0.05, 0.9), lq=st.floats(-2.0, 2.0))
def test_big_theta_bridge_property(x, p, lq):
    assert qs.theta_bridge_residual(x, p, math.exp(lq)) <= 1e-9


def test_displacement_term():
    assert qs.displacement_Gn([], [], []) == 0.0
    rho = 0.3
    assert qs.displacement_Gn([rho], [1.0], [0.0]) == pytest.approx(2 * _mp_qpoch_log(-rho, rho * rho), abs=1e-14)
    rho, mu, x = [0.1, 0.6], [0.8, 2.5], [0.35, 0.9]
    assert qs.displacement_Gn(rho, mu, x) == pytest.approx(qs.displacement_Gn_via_theta(rho, mu, x), abs=1e-10)
    with pytest.raises(DomainError):
        qs.displacement_Gn([1.2], [1.0], [0.0])


def test_displacement_term_two_well(two_well):
    from coulombgas.functionals import gap_constants
    from coulombgas.potential import Perturbation, power

    P, G = two_well
    gaps = gap_constants(P, G, power(2).scaled(0.04), Perturbation(0.5, 0.0), 101)
    direct = qs.displacement_Gn(gaps.rho, gaps.mu, gaps.x)
    assert direct == pytest.approx(qs.displacement_Gn_via_theta(gaps.rho, gaps.mu, gaps.x), abs=1e-10)


@pytest.mark.parametrize("w", [0.1, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 7.3, 10.0])
def test_log_barnes_g_against_mpmath(w):
    with mp.workdps(30):
        ref = float(mp.log(mp.barnesg(w)))
    assert qs.log_barnes_g(w) == pytest.approx(ref, abs=1e-12)


def test_log_barnes_g_examples():
    for w in (1.0, 2.0, 3.0):
        assert qs.log_barnes_g(w) == pytest.approx(0.0, abs=1e-14)
    assert qs.log_barnes_g(4.0) == pytest.approx(math.log(2.0), abs=1e-13)
    with pytest.raises(DomainError):
        qs.log_barnes_g(0.0)


def test_constants():
    C = qs.math_constants()
    with mp.workdps(30):
        assert C.zeta_prime_minus1 == pytest.approx(float(mp.zeta(-1, derivative=1)), abs=1e-16)
        assert C.zeta_prime_minus1 == pytest.approx(float(mp.mpf(1) / 12 - mp.log(mp.glaisher)), abs=1e-16)
    assert C.log_factorial(0) == 0.0
    assert C.log_factorial(10) == pytest.approx(math.log(3628800), abs=1e-13)
    with pytest.raises(DomainError):
        C.log_factorial(-1)


def test_euler_maclaurin_exact_cases():
    lin = qs.euler_maclaurin_sum(lambda x, k: x if k == 0 else (1.0 if k == 1 else 0.0), 0, 10, 1)
    assert lin.value == pytest.approx(45.0, abs=1e-12)
    n = 25
    sq = qs.euler_maclaurin_sum(lambda x, k: [x * x, 2 * x, 2.0][k] if k < 3 else 0.0, 0, n, 2)
    assert sq.value == pytest.approx(n * (n - 1) * (2 * n - 1) / 6, abs=1e-9)


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_euler_maclaurin_smooth_function(d):
    # f(x) = log Gamma(x + 5) with polygamma derivatives
    def f(x, k):
        return math.lgamma(x + 5) if k == 0 else float(mp.polygamma(k - 1, x + 5))

    m, n = 2, 40
    direct = math.fsum(math.lgamma(j + 5) for j in range(m, n))
    res = qs.euler_maclaurin_sum(f, m, n, d)
    assert abs(res.value - direct) <= res.bound + 1e-11


def test_euler_identity():
    assert qs.euler_identity_residual(1.3, 0.6, 0.7, -0.4) <= 1e-10
    assert qs.euler_identity_residual(4.0, 0.95, 1.0, 0.5) <= 1e-10
