import math

import numpy as np
import pytest

from coulombgas import free_energy as fe
from coulombgas.errors import DomainError, GeometryError, MultiPeakError
from coulombgas.potential import Perturbation, power
from coulombgas.qspecial import CONSTANTS

LOG_2PI = math.log(2 * math.pi)


def _ginibre_log_h(j, n, alpha=0.0):
    return math.lgamma(j + 1 + alpha) - (j + 1 + alpha) * math.log(n)


@pytest.mark.parametrize("alpha", [0.0, 0.5, -0.3])
def test_ginibre_norms_match_gamma(ginibre, alpha):
    P, G = ginibre
    n = 40
    table = fe.norm_table(P, None, Perturbation(0.0, alpha), n, G=G)
    ref = np.array([_ginibre_log_h(j, n, alpha) for j in range(n)])
    np.testing.assert_allclose(table.log_h, ref, rtol=1e-10, atol=1e-12)


def test_tilted_ginibre_norm(ginibre):
    """With h = r^2 the tilt rescales the Gaussian weight: h_j = Gamma(j+1) / (n - s)^{j+1}."""
    P, G = ginibre
    n, s, j = 60, 0.8, 17
    e = fe.norm_hj_quadrature(P, power(2), Perturbation(s, 0.0), j, n, G=G)
    assert e.log_hj == pytest.approx(math.lgamma(j + 1) - (j + 1) * math.log(n - s), rel=1e-11)


def test_laplace_correction_ginibre(ginibre):
    P, _ = ginibre
    for tau in (0.2, 0.5, 0.9):
        assert fe.laplace_correction(P, None, Perturbation(), math.sqrt(tau)) == pytest.approx(1 / (12 * tau), rel=1e-12)


def test_laplace_norm_close_to_quadrature(annulus):
    P, G = annulus
    n, j = 200, 100
    lap = fe.norm_hj_laplace(P, None, Perturbation(), j, n).log_hj
    quad = fe.norm_hj_quadrature(P, None, Perturbation(), j, n, G=G).log_hj
    assert abs(lap - quad) < 1e-4
    with pytest.raises(DomainError):
        fe.norm_hj_laplace(P, None, Perturbation(), 0, n)


def test_laplace_refuses_two_peaks(two_well):
    P, G = two_well
    n = 100
    j = round(G.masses[0] * n)
    with pytest.raises(MultiPeakError):
        fe.norm_hj_laplace(P, None, Perturbation(), j, n)


def test_laplace_table_falls_back(ginibre):
    P, G = ginibre
    t = fe.norm_table(P, None, Perturbation(), 60, G=G, method="laplace")
    methods = {e.method for e in t.entries}
    assert methods == {"laplace", "quadrature"}
    assert t.entries[0].method == "quadrature"
    assert "schema=1" in t.to_csv().splitlines()[0]


def test_index_errors(ginibre):
    P, _ = ginibre
    with pytest.raises(DomainError):
        fe.norm_hj_quadrature(P, None, Perturbation(), 10, 10)
    with pytest.raises(DomainError):
        fe.log_partition_exact(P, None, Perturbation(), 1)


def test_large_tilt_warns(ginibre):
    P, G = ginibre
    with pytest.warns(RuntimeWarning):
        fe.norm_hj_quadrature(P, power(2), Perturbation(6.0, 0.0), 5, 50, G=G)


def test_ginibre_expansion_closed_form(ginibre):
    P, G = ginibre
    n = 123
    bd = fe.expansion_regular(P, G, None, Perturbation(), n)
    closed = -0.75 * n * n + 0.5 * n * math.log(n) + n * (0.5 * LOG_2PI - 1) + 5 / 12 * math.log(n) \
        + CONSTANTS.zeta_prime_minus1 + 0.5 * LOG_2PI
    assert bd.total == pytest.approx(closed, abs=1e-9)
    assert bd.total == pytest.approx(sum(bd.terms().values()), abs=1e-9)
    assert bd.Gn == 0.0 and bd.total_without_Gn == bd.total


def test_ginibre_exact_vs_expansion(ginibre):
    P, G = ginibre
    for n in (50, 100):
        lz, _ = fe.log_partition_exact(P, None, Perturbation(), n, G=G)
        exact = math.lgamma(n + 1) + math.fsum(_ginibre_log_h(j, n) for j in range(n))
        assert lz == pytest.approx(exact, rel=1e-12)
        res = lz - fe.expansion_regular(P, G, None, Perturbation(), n).total
        assert res * n == pytest.approx(1 / 12, abs=0.01)


def test_conical_reduces_to_regular(ginibre, two_well):
    for P, G in (ginibre, two_well):
        for pert, h in ((Perturbation(), None), (Perturbation(0.4, 0.0), power(2).scaled(0.04))):
            r = fe.expansion_regular(P, G, h, pert, 111)
            c = fe.expansion_conical(P, G, h, pert, 111)
            for k, v in r.terms().items():
                assert c.terms()[k] == pytest.approx(v, abs=1e-12), k


def test_expansion_guards(outpost, annulus, ginibre):
    P, G = outpost
    with pytest.raises(GeometryError):
        fe.expansion_regular(P, G, None, Perturbation(), 100)
    Pa, Ga = annulus
    with pytest.raises(GeometryError):
        fe.expansion_conical(Pa, Ga, None, Perturbation(0.0, 0.5), 100)
    Pg, Gg = ginibre
    with pytest.raises(DomainError):
        fe.expansion_regular(Pg, Gg, None, Perturbation(0.0, 0.5), 100)


def test_breakdown_json(two_well):
    import json

    P, G = two_well
    bd = fe.expansion_regular(P, G, None, Perturbation(), 117)
    d = json.loads(bd.to_json())
    assert d["total"] == pytest.approx(bd.total)
    assert d["details"]["x"] == [pytest.approx(0.1, abs=1e-9)]


def test_outpost_parameters(outpost):
    P, G = outpost
    op = fe.outpost_parameters(P, G, power(2))
    assert op.case == "outer"
    assert op.rho == pytest.approx(G.b[0] / G.outposts[0])
    assert op.theta == pytest.approx(math.sqrt(float(P.laplacian(G.b[0])) / float(P.laplacian(G.outposts[0]))))
    assert op.c == pytest.approx(G.outposts[0] ** 2 - G.b[0] ** 2)
    assert op.mu(0.5) == pytest.approx(op.theta * math.exp(0.5 * op.c))


def test_outpost_ratio_small_n(outpost):
    P, G = outpost
    R = fe.outpost_log_ratio(P, G, None, 0.0, 60)
    assert R.log_Z == pytest.approx(R.log_Z_localized + R.measured)
    assert abs(R.difference) < 0.05
    # the localised partition function is the full one restricted to the droplet side
    lz, _ = fe.log_partition_exact(P, None, Perturbation(), 60, G=G)
    assert R.log_Z == pytest.approx(lz, abs=1e-9)


def test_compare_report(ginibre):
    P, G = ginibre
    ns = [20, 40]
    exact = [fe.log_partition_exact(P, None, Perturbation(), n, G=G)[0] for n in ns]
    bds = [fe.expansion_regular(P, G, None, Perturbation(), n) for n in ns]
    rows = fe.compare_report(exact, bds, ns)
    assert rows[0].residual > rows[1].residual > 0
    assert fe.trend_flags(rows)["decreasing"]
    csv = fe.compare_csv(rows)
    assert csv.splitlines()[0] == "schema=1" and len(csv.splitlines()) == 4
    assert fe.scaled(1.0, 8, "1/n") == 8.0
