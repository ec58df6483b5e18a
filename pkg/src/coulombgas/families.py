"""Concrete potential families used by the test-suite, the CLI and the examples.

Profiles are built symbolically so that every derivative (including the
radial derivatives of Delta Q, which involve cancellations at ``r = 0``) is
exact up to floating point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import sympy as sp
from scipy import optimize

from .errors import DomainError
from .potential import RadialPotential

r = sp.Symbol("r", positive=True)
_MAX_ORDER = 6


def _lambdify(expr):
    f = sp.lambdify(r, expr, "numpy")
    return lambda x: np.asarray(f(x), dtype=float) * np.ones_like(np.asarray(x, dtype=float))


def from_expr(expr, *, name: str = "custom", params: dict | None = None, r_max: float | None = None,
              simplify_laplacian: bool = False) -> RadialPotential:
    """Build a :class:`RadialPotential` from a sympy expression in ``r``."""
    expr = sp.sympify(expr)
    derivs = [_lambdify(sp.diff(expr, r, k)) for k in range(_MAX_ORDER + 1)]
    lap = (sp.diff(expr, r, 2) + sp.diff(expr, r) / r) / 4
    if simplify_laplacian:
        lap = sp.simplify(lap)
    laps = [_lambdify(sp.diff(lap, r, k)) for k in range(3)]

    def deriv(x, k):
        if k > _MAX_ORDER:
            raise ValueError(f"derivative order {k} not available")
        return derivs[k](x)

    def laplacian(x, k):
        return laps[k](x)

    if simplify_laplacian:
        lap_fn = laplacian
    else:
        lap_fn = None  # the generic reduction handles r -> 0 itself
    return RadialPotential(derivs[0], derivatives=deriv, laplacian=lap_fn, r_max=r_max,
                           name=name, params=dict(params or {}, expr=str(expr)))


def ginibre(c: float = 1.0) -> RadialPotential:
    """``q(r) = c r^2``; droplet is the disk of radius ``1/sqrt(c)``."""
    if c <= 0:
        raise DomainError("ginibre scale must be positive")
    return from_expr(sp.Float(c) * r**2 if c != 1 else r**2, name="ginibre",
                     params={"c": c}, simplify_laplacian=True)


def even_polynomial(coeffs: Sequence[float], constant: float = 0.0) -> RadialPotential:
    """``q(r) = constant + sum_k coeffs[k-1] r^(2k)`` (``k >= 1``).

    ``even_polynomial([-2, 1])`` is ``r^4 - 2 r^2``.
    """
    coeffs = [float(c) for c in coeffs]
    if not coeffs or coeffs[-1] <= 0:
        raise DomainError("leading coefficient of an even polynomial must be positive")
    expr = sp.nsimplify(constant) + sum(sp.nsimplify(c) * r ** (2 * (k + 1)) for k, c in enumerate(coeffs))
    return from_expr(expr, name="even_polynomial", params={"coeffs": coeffs, "constant": constant},
                     simplify_laplacian=True)


def polynomial_in_u_from_mass(mass_coeffs_u: Sequence[float]) -> list[float]:
    """Even-polynomial coefficients whose mass function is the given polynomial
    ``T(u) = sum_i m_i u^i`` of ``u = r^2`` (``m_0`` must vanish).

    With ``q = sum_k c_k u^k`` one has ``T = u dq/du = sum_k k c_k u^k``.
    """
    m = list(mass_coeffs_u)
    if m and abs(m[0]) > 0:
        raise DomainError("mass function must vanish at the origin")
    return [m[k] / k for k in range(1, len(m))]


def two_component(b0: float = 0.5, a1: float = 5.0, M0: float = 0.3) -> RadialPotential:
    """Even polynomial whose droplet is a disk ``r <= b0`` plus an annulus starting at ``a1``.

    The mass function in ``u = r^2`` is the cubic
    ``T(u) = M0 + R (u - b0^2)(u - u_c)(u - a1^2)`` with ``R = M0 / (b0^2 u_c a1^2)``
    (so ``T(0) = 0``).  ``T`` crosses ``M0`` upwards at both ends of the gap
    and downwards at ``u_c``, which is fixed by the equal-area condition
    ``int_{b0^2}^{a1^2} (T - M0) du / u = 0``; the gap modulus is
    ``rho = b0 / a1``.  ``T`` is increasing on ``[0, b0^2]`` and beyond ``a1^2``.
    """
    if not 0 < b0 < a1 or not 0 < M0 < 1:
        raise DomainError("need 0 < b0 < a1 and 0 < M0 < 1")
    ub, ua = b0 * b0, a1 * a1

    def coefficients(uc):
        R = M0 / (ub * uc * ua)
        return R * np.poly1d([1.0, -ub]) * np.poly1d([1.0, -uc]) * np.poly1d([1.0, -ua])

    def equal_area(uc):
        c3, c2, c1, c0 = coefficients(uc).coeffs
        prim = lambda u: c3 * u**3 / 3.0 + c2 * u**2 / 2.0 + c1 * u + c0 * math.log(u)
        return prim(ua) - prim(ub)

    span = ua - ub
    uc = optimize.brentq(equal_area, ub + 1e-9 * span, ua - 1e-9 * span, xtol=1e-14, rtol=1e-15)
    mass = list((coefficients(uc) + M0).coeffs[::-1])
    mass[0] = 0.0
    P = even_polynomial(polynomial_in_u_from_mass(mass))
    P.name = "two_component"
    P.params.update(b0=b0, a1=a1, M0=M0, u_c=uc)
    return P


@dataclass
class BumpSpec:
    """Gaussian well ``-depth * exp(-(r - center)^2 / (2 width^2))`` added to a base profile."""

    center: float
    depth: float
    width: float
    target: float = float("nan")  # radius of the outpost it was tuned for
    extra: dict = field(default_factory=dict)


def base_plus_bump(base_expr, bump: BumpSpec, name: str = "base_plus_bump") -> RadialPotential:
    base_expr = sp.sympify(base_expr)
    expr = base_expr - sp.Float(bump.depth) * sp.exp(-((r - sp.Float(bump.center)) ** 2) / (2 * sp.Float(bump.width) ** 2))
    P = from_expr(expr, name=name, params={"base": str(base_expr), "center": bump.center, "depth": bump.depth,
                                           "width": bump.width, "target": bump.target})
    return P


def tune_outpost_bump(base_expr, t: float, b_outer: float, level: float, width: float | None = None,
                      tol: float = 1e-14, max_iter: int = 60) -> BumpSpec:
    """Solve for bump (depth, center) so that ``g_1(t) = level`` and ``g_1'(t) = 0``.

    ``level`` is the value ``B_1`` of ``g_1`` on the outer droplet edge.  The
    width defaults to ``(t - b_outer) / 8``, which keeps the bump below
    ``e^{-32}`` relative on the droplet.
    """
    if t <= b_outer:
        raise DomainError("outpost must lie outside the droplet")
    w = width if width is not None else (t - b_outer) / 8.0
    base_expr = sp.sympify(base_expr)
    g0 = float(base_expr.subs(r, t)) - 2.0 * np.log(t)
    g1 = float(sp.diff(base_expr, r).subs(r, t)) - 2.0 / t
    # unknowns (d, c); bump value at t and its derivative
    d, c = max(g0 - level, 1e-3), t
    for _ in range(max_iter):
        e = np.exp(-((t - c) ** 2) / (2 * w * w))
        F0 = g0 - d * e - level
        F1 = g1 + d * e * (t - c) / w**2
        if abs(F0) < tol and abs(F1) < tol:
            break
        # Jacobian
        de_dc = e * (t - c) / w**2
        J = np.array([[-e, -d * de_dc],
                      [e * (t - c) / w**2, d * (de_dc * (t - c) / w**2 - e / w**2)]])
        step = np.linalg.solve(J, -np.array([F0, F1]))
        d, c = d + step[0], c + step[1]
    else:
        raise DomainError("bump tuning did not converge")
    if d <= 0:
        raise DomainError("tuned bump has non-positive depth")
    return BumpSpec(center=float(c), depth=float(d), width=float(w), target=float(t))


def ginibre_with_outpost(t: float = 1.5, width: float | None = None) -> RadialPotential:
    """``r^2`` plus a well whose bottom touches the obstacle at radius ``t > 1``."""
    spec = tune_outpost_bump(r**2, t, 1.0, 1.0, width)
    P = base_plus_bump(r**2, spec, name="ginibre_with_outpost")
    P.params["t"] = t
    return P
