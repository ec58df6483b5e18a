import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from coulombgas import families
from coulombgas.errors import DomainError, SingularError
from coulombgas.potential import (
    Perturbation,
    RadialPotential,
    combined_k,
    constant,
    curvature_B,
    g_tau,
    laplace_density,
    log_modulus,
    mass_function,
    peak_derivatives,
    power,
)


def _fd(f, r, k, h=1e-4):
    """Central finite differences (oracle independent of the package)."""
    if k == 1:
        return (f(r + h) - f(r - h)) / (2 * h)
    if k == 2:
        return (f(r + h) - 2 * f(r) + f(r - h)) / h**2
    raise ValueError


def _lap_2d(q, r, h=1e-4):
    """Planar five-point Laplacian of Q(x, y) = q(|z|), divided by 4."""
    Q = lambda x, y: q(math.hypot(x, y))
    x, y = r, 0.0
    return (Q(x + h, y) + Q(x - h, y) + Q(x, y + h) + Q(x, y - h) - 4 * Q(x, y)) / h**2 / 4


def test_ginibre_laplacian_is_one(ginibre):
    P, _ = ginibre
    assert laplace_density(P, 0.7) == pytest.approx(1.0, abs=1e-14)


def test_quartic_laplacian_matches_planar_finite_differences(annulus):
    P, _ = annulus
    q = lambda r: r**4 - 2 * r**2
    # Delta Q = 4 r^2 - 2 for this profile
    assert laplace_density(P, 1.0) == pytest.approx(2.0, rel=1e-12)
    for r in (0.8, 1.0, 1.1):
        assert laplace_density(P, r) == pytest.approx(_lap_2d(q, r), rel=1e-5)


def test_outside_working_interval_raises(ginibre):
    P, _ = ginibre
    with pytest.raises(DomainError):
        laplace_density(P, P.r_max + 1)
    with pytest.raises(DomainError):
        mass_function(P, P.r_max + 1)


def test_mass_function_examples(ginibre, annulus):
    P, _ = ginibre
    assert mass_function(P, 0.5) == pytest.approx(0.25)
    assert mass_function(P, 1.0) == pytest.approx(1.0)
    Pa, _ = annulus
    assert mass_function(Pa, 1.0) == pytest.approx(0.0, abs=1e-14)
    q = lambda r: r**4 - 2 * r**2
    for r in (0.9, 1.05, 1.15):
        assert mass_function(Pa, r) == pytest.approx(r * _fd(q, r, 1) / 2, rel=1e-7)


def test_g_tau_examples(ginibre, annulus):
    P, _ = ginibre
    assert g_tau(P, 1.0, 1.0) == pytest.approx(1.0)
    assert g_tau(P, 0.5, math.e) == pytest.approx(math.e**2 - 1)
    Pa, _ = annulus
    assert g_tau(Pa, 0.0, 1.1) == pytest.approx(float(Pa.d(1.1)))


def test_ginibre_curvature(ginibre):
    P, _ = ginibre
    assert curvature_B(P, 0.5) == pytest.approx(1 / 3, rel=1e-14)
    r = np.linspace(0.05, 1.5, 100)
    np.testing.assert_allclose(curvature_B(P, r) * 12 * r**2, 1.0, atol=1e-14)


def test_quartic_curvature_symbolic(annulus):
    P, _ = annulus
    r = sp.Symbol("r", positive=True)
    L = 4 * r**2 - 2
    B = -sp.diff(L, r, 2) / (32 * L**2) - 19 * sp.diff(L, r) / (96 * r * L**2) \
        + 5 * sp.diff(L, r) ** 2 / (96 * L**3) + 1 / (12 * r**2 * L)
    assert curvature_B(P, 1.1) == pytest.approx(float(B.subs(r, 1.1)), rel=1e-10)


def test_singular_where_laplacian_vanishes(annulus):
    P, _ = annulus
    r0 = math.sqrt(0.5)  # 4 r^2 - 2 = 0
    with pytest.raises(SingularError):
        curvature_B(P, r0)
    with pytest.raises(SingularError):
        peak_derivatives(P, r0)


@pytest.mark.parametrize("r, expected", [(0.5, (4, -8, 48)), (1.0, (4, -4, 12))])
def test_ginibre_peak_derivatives(ginibre, r, expected):
    P, _ = ginibre
    assert peak_derivatives(P, r) == pytest.approx(expected, rel=1e-13)


def test_quartic_peak_derivatives_against_g_tau(annulus):
    P, _ = annulus
    r = 1.0
    tau = float(mass_function(P, r))
    d2, d3, d4 = peak_derivatives(P, r)
    assert (d2, d3, d4) == pytest.approx((8.0, 24.0, 24.0), rel=1e-12)
    # direct derivatives of g_tau = q - 2 tau log r at the critical point
    g = lambda x: x**4 - 2 * x**2 - 2 * tau * math.log(x)
    assert d2 == pytest.approx(_fd(g, r, 2), rel=1e-6)
    g1 = lambda x: 4 * x**3 - 4 * x - 2 * tau / x
    assert d3 == pytest.approx(_fd(g1, r, 2), rel=1e-6)


@pytest.mark.parametrize("family", ["ginibre", "annulus", "two_well"])
def test_derivatives_agree_with_finite_differences(family, request):
    P, _ = request.getfixturevalue(family)
    assert P.check_derivatives(rtol=1e-6) <= 1e-6


def test_mismatched_derivatives_fail_gate():
    P = RadialPotential(lambda r: r**2, derivatives=lambda r, k: 3 * r if k == 1 else 2.0 + 0 * r, name="bad",
                        r_max=3.0)
    with pytest.raises(ValueError):
        P.check_derivatives()


def test_finite_difference_fallback_matches_analytic():
    P = RadialPotential(lambda r: r**4 - 2 * r**2, name="fd", r_max=3.0)
    r = np.linspace(0.8, 1.5, 7)
    np.testing.assert_allclose(P.laplacian(r), 4 * r**2 - 2, rtol=1e-6)


def test_combined_k_examples():
    assert combined_k(power(2), Perturbation(0.0, 0.0), 1.3) == 0.0
    assert combined_k(power(2), Perturbation(1.0, 0.0), 2.0) == pytest.approx(4.0)
    assert combined_k(None, Perturbation(0.0, 1.0), math.e) == pytest.approx(2.0)
    with pytest.raises(DomainError):
        combined_k(None, Perturbation(0.0, 1.0), 0.0)


def test_perturbation_rejects_alpha_below_minus_one():
    with pytest.raises(DomainError):
        Perturbation(0.0, -1.0)


def test_test_function_builders():
    assert constant(2.5).d(0.3) == 2.5 and constant(2.5).d(0.3, 1) == 0.0
    ell = log_modulus()
    assert ell.d(math.e) == pytest.approx(2.0)
    assert ell.d(2.0, 1) == pytest.approx(1.0)
    assert power(2).scaled(3.0).d(2.0) == pytest.approx(12.0)


@settings(max_examples=40, deadline=None)
@given(c=st.floats(0.2, 5.0), r=st.floats(0.05, 0.9))
def test_scaled_ginibre_invariants(c, r):
    P = families.ginibre(c)
    assert laplace_density(P, r) == pytest.approx(c, rel=1e-12)
    assert mass_function(P, r) == pytest.approx(c * r * r, rel=1e-12)
    # g_tau' vanishes exactly where T = tau
    tau = float(mass_function(P, r))
    assert float(g_tau(P, tau, r, 1)) == pytest.approx(0.0, abs=1e-12)
