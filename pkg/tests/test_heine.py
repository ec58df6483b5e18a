import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from coulombgas import heine
from coulombgas.errors import DomainError, IdentityViolation
from coulombgas.free_energy import OutpostParameters
from coulombgas.functionals import gap_constants
from coulombgas.heine import DiscreteNormal, HeineDist, dnormal_check, predicted_fluct_cgf
from coulombgas.potential import Perturbation, power


def _series_pmf(theta, q, K=200):
    """Heine pmf by direct mpmath evaluation of the defining formula."""
    with mp.workdps(30):
        norm = mp.qp(-theta, q)
        return [float(q ** (k * (k - 1) / 2) * mp.mpf(theta) ** k / (mp.qp(q, q, k) * norm)) for k in range(K)]


def test_pmf_normalises():
    D = HeineDist(1.3, 0.6)
    k, p = D.support_pmf()
    assert math.fsum(p) == pytest.approx(1.0, abs=1e-12)
    ref = _series_pmf(1.3, 0.6, len(k))
    np.testing.assert_allclose(p, ref, rtol=1e-12, atol=1e-300)
    assert D.pmf(3) == pytest.approx(ref[3], rel=1e-12)
    assert D.pmf(-1) == 0.0


def test_cgf_against_series():
    D = HeineDist(1.0, 0.5)
    c, s = 1.0, 0.3
    ref = _series_pmf(1.0, 0.5, 80)
    series = math.log(math.fsum(p * math.exp(c * s * k) for k, p in enumerate(ref)))
    assert D.cgf_scaled(c, s) == pytest.approx(series, abs=1e-12)
    assert D.cgf_scaled(0.0, 0.7) == 0.0 and D.cgf_scaled(1.0, 0.0) == 0.0


@settings(max_examples=50, deadline=None)
@given(theta=st.floats(0.01, 5.0), q=st.floats(0.05, 0.95))
def test_moments(theta, q):
    D = HeineDist(theta, q)
    k, p = D.support_pmf()
    mean, q_mean = D.moments()
    assert mean == pytest.approx(math.fsum(k * p), rel=1e-10, abs=1e-14)
    assert math.fsum(p * q**k) == pytest.approx(1 / (1 + theta), abs=1e-10)
    assert q_mean == pytest.approx(math.fsum(p * (1 - q**k) / (1 - q)), abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(theta=st.floats(0.05, 3.0), q=st.floats(0.05, 0.9), c=st.floats(-2, 2))
def test_cgf_is_convex_in_s(theta, q, c):
    D = HeineDist(theta, q)
    s = np.linspace(-1, 1, 9)
    F = np.array([D.cgf_scaled(c, x) for x in s])
    assert np.all(np.diff(F, 2) >= -1e-12)


def test_invalid_parameters():
    with pytest.raises(DomainError):
        HeineDist(0.0, 0.5)
    with pytest.raises(DomainError):
        HeineDist(1.0, 1.0)


@pytest.mark.parametrize("theta, rho", [(1.0, 0.5), (2.0, 0.7), (0.3, 0.2)])
def test_difference_is_discrete_normal(theta, rho):
    tv = dnormal_check(HeineDist(theta * rho, rho * rho), HeineDist(rho / theta, rho * rho))
    assert tv <= 1e-10


def test_discrete_normal_pmf():
    lam, q = 1.0, 0.5
    dn = DiscreteNormal(lam, q)
    k, p = dn.support_pmf()
    assert math.fsum(p) == pytest.approx(1.0, abs=1e-12)
    w = np.array([lam**j * q ** (j * (j - 1) / 2) for j in range(-30, 31)])
    w /= w.sum()
    assert dn.pmf(0) == pytest.approx(w[30], rel=1e-12)
    assert dn.pmf(2) == pytest.approx(w[32], rel=1e-12)
    assert dn.pmf(10_000) == 0.0


def test_sampler_mean_and_chi_square():
    D = HeineDist(1.3, 0.6)
    rng = np.random.default_rng(11)
    x = D.sample(rng, 200_000)
    mean, _ = D.moments()
    se = x.std(ddof=1) / math.sqrt(len(x))
    assert abs(x.mean() - mean) <= 4 * se
    k, p = D.support_pmf()
    obs = np.bincount(x, minlength=len(k))[: len(k)]
    keep = p * len(x) >= 5
    exp_ = p[keep] * len(x)
    o = obs[keep]
    chi2 = np.sum((o - exp_) ** 2 / exp_) + (len(x) - o.sum() - (len(x) - exp_.sum())) ** 2 / max(len(x) - exp_.sum(), 1e-9)
    assert stats.chi2.sf(chi2, keep.sum()) > 1e-3
    assert isinstance(D.sample(rng), int)


def test_two_paths_agree_two_well(two_well):
    P, G = two_well
    gaps = gap_constants(P, G, power(2).scaled(0.04), Perturbation(), 101)
    a, b = heine.gap_cgf_two_paths(gaps, 0.5)
    assert a == pytest.approx(b, abs=1e-12)
    val = predicted_fluct_cgf(gaps, 0.1, 0.2, 0.5)
    assert val == pytest.approx(0.5 * 0.1 + 0.125 * 0.2 + a, abs=1e-14)


def test_path_disagreement_is_reported(two_well):
    P, G = two_well
    gaps = gap_constants(P, G, power(2).scaled(0.04), Perturbation(), 101)
    gaps.K_n += 1.0  # breaks the identity between the two routes
    with pytest.raises(IdentityViolation):
        predicted_fluct_cgf(gaps, 0.0, 0.0, 0.5)


def test_modes():
    # no gaps: only the Gaussian part remains
    assert predicted_fluct_cgf(None, 0.5, 0.5, 1.0) == pytest.approx(0.75)
    op = OutpostParameters(1.5, "outer", 2 / 3, 0.8, 1.25, 1.25)
    X = HeineDist(op.theta * op.rho, op.rho**2)
    assert predicted_fluct_cgf(None, 0.0, 0.0, 0.5, "outpost", outpost=op) == pytest.approx(X.cgf_scaled(1.25, 0.5))
    with pytest.raises(DomainError):
        predicted_fluct_cgf(None, 0.0, 0.0, 0.5, "outpost")
    with pytest.raises(DomainError):
        predicted_fluct_cgf(None, 0.0, 0.0, 0.5, "regular", outpost=op)
    with pytest.raises(DomainError):
        predicted_fluct_cgf(None, 0.0, 0.0, 0.5, "bogus")
    with pytest.raises(DomainError):
        predicted_fluct_cgf(None, 0.0, 0.0, 0.5, "log_statistic")
    # log statistic on a disk without gaps: (alpha^2/2) log n + alpha e + alpha^2 v/2 - log G(1 + alpha)
    from coulombgas.qspecial import log_barnes_g

    val = predicted_fluct_cgf(None, 0.3, 0.0, 0.5, "log_statistic", n=100)
    assert val == pytest.approx(0.125 * math.log(100) + 0.15 - log_barnes_g(1.5))
