"""Randomised self-checks of the exact identities the pipelines rely on.

Each check draws its parameters from a seeded generator and records the
worst residual; a check passes when that residual is below its threshold.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, List

import numpy as np

from . import droplet as dl
from . import families
from . import functionals as fn
from .heine import DiscreteNormal, HeineDist, dnormal_check
from .potential import log_modulus
from .qspecial import euler_identity_residual, euler_maclaurin_sum, q_binomial_check, theta_bridge_residual


@dataclass
class IdentityResult:
    name: str
    draws: int
    worst: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.worst <= self.threshold


def _worst(draw: Callable[[np.random.Generator], float], rng: np.random.Generator, draws: int) -> float:
    return max(abs(draw(rng)) for _ in range(draws))


def _q_binomial(rng):
    return q_binomial_check(rng.uniform(-1.5, 1.5), rng.uniform(0.05, 0.95), int(rng.integers(1, 41)))


def _euler(rng):
    return euler_identity_residual(rng.uniform(0.05, 5.0), rng.uniform(0.05, 0.95), rng.uniform(-2, 2), rng.uniform(-1, 1))


def _bridge(rng):
    return theta_bridge_residual(rng.uniform(0.0, 1.0), rng.uniform(0.05, 0.9), math.exp(rng.uniform(-2, 2)))


def _heine_normalisation(rng):
    _, p = HeineDist(rng.uniform(0.01, 5.0), rng.uniform(0.05, 0.95)).support_pmf()
    return math.fsum(p) - 1.0


def _heine_q_moment(rng):
    D = HeineDist(rng.uniform(0.01, 5.0), rng.uniform(0.05, 0.95))
    k, p = D.support_pmf()
    return math.fsum(p * D.q**k) - 1.0 / (1.0 + D.theta)


def _dnormal(rng):
    theta, rho = math.exp(rng.uniform(-1.5, 1.5)), rng.uniform(0.05, 0.9)
    return dnormal_check(HeineDist(theta * rho, rho * rho), HeineDist(rho / theta, rho * rho))


def _dnormal_normalisation(rng):
    _, p = DiscreteNormal(math.exp(rng.uniform(-2, 2)), rng.uniform(0.05, 0.9)).support_pmf()
    return math.fsum(p) - 1.0


def _em_polynomial(rng):
    d = int(rng.integers(1, 5))
    coeffs = rng.normal(size=2 * d)  # degree 2d - 1
    poly = np.polynomial.Polynomial(coeffs)
    m = int(rng.integers(0, 5))
    n = m + int(rng.integers(1, 30))

    def f(x, k):
        return float(poly.deriv(k)(x)) if k else float(poly(x))

    anti = poly.integ()
    res = euler_maclaurin_sum(f, m, n, d, antiderivative=lambda x: float(anti(x)))
    vals = [float(poly(j)) for j in range(m, n)]
    # relative to the size of the summands: random signs can make the sum itself tiny
    return (res.value - math.fsum(vals)) / max(1.0, math.fsum(abs(v) for v in vals))


def _random_quartic(rng):
    """``q = c1 r^2 + c2 r^4``: a disk for ``c1 > 0``, an annulus for ``c1 < 0``."""
    c1 = rng.choice([-1.0, 1.0]) * rng.uniform(0.3, 2.0)
    return families.even_polynomial([c1, rng.uniform(0.3, 2.0)])


def _ell_identity(P, G):
    return fn.sigma_moment(P, G, log_modulus(), gate=False) - fn.ell_moment_closed_form(P, G)


def _b_identity(P, G):
    a, b = G.components[0]
    if a == 0.0:
        # the identity is local: on a disk it is checked on the annulus [b/2, b]
        a = 0.5 * b
    return fn.b_identity_residual(P, a, b)


def run_identity_suite(draws: int = 100, seed: int = 0, potential_draws: int | None = None) -> List[IdentityResult]:
    """Run every identity on ``draws`` random parameter sets."""
    rng = np.random.default_rng(seed)
    out = [
        IdentityResult("q_binomial", draws, _worst(_q_binomial, rng, draws), 1e-10),
        IdentityResult("euler_identity", draws, _worst(_euler, rng, draws), 1e-10),
        IdentityResult("theta_bridge", draws, _worst(_bridge, rng, draws), 1e-9),
        IdentityResult("heine_normalisation", draws, _worst(_heine_normalisation, rng, draws), 1e-12),
        IdentityResult("heine_q_moment", draws, _worst(_heine_q_moment, rng, draws), 1e-10),
        IdentityResult("dnormal_difference", draws, _worst(_dnormal, rng, draws), 1e-10),
        IdentityResult("dnormal_normalisation", draws, _worst(_dnormal_normalisation, rng, draws), 1e-12),
        IdentityResult("euler_maclaurin_polynomial", draws, _worst(_em_polynomial, rng, draws), 1e-12),
    ]
    k = potential_draws or draws
    ell, bint = [], []
    for _ in range(k):
        P = _random_quartic(rng)
        G = dl.compute_droplet(P)
        ell.append(abs(_ell_identity(P, G)))
        bint.append(abs(_b_identity(P, G)))
    out.append(IdentityResult("ell_moment", k, max(ell), 1e-9))
    out.append(IdentityResult("b_integral_fq", k, max(bint), 1e-9))
    return out


def identities_csv(results: List[IdentityResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["schema=1"])
    w.writerow(["identity", "draws", "worst_residual", "threshold", "pass"])
    for r in results:
        w.writerow([r.name, r.draws, f"{r.worst:.3e}", f"{r.threshold:.0e}", int(r.passed)])
    return buf.getvalue()
