"""Geometric functionals of the droplet entering the free-energy expansions.

All integrals are radial: on a component ``A(a, b)`` the equilibrium measure
is ``d sigma = 2 r Delta Q(r) dr`` and the area element (normalised by ``pi``)
is ``dA = 2 r dr``.  Writing ``L = log Delta Q``:

* energy      ``I_Q = int Q dsigma + sum_nu [ (1/4) int r q'^2 dr + M_{nu-1}^2 log a_nu - M_nu^2 log b_nu ]``
* entropy     ``E_Q = int L dsigma``
* expectation ``e_h = sum_nu (1/4) [r h']_a^b - (1/4) int_a^b r h' L' dr``
* variance    ``v_h = (1/2) sum_nu int_a^b r h'^2 dr``
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, List, Optional, Union

import numpy as np
from scipy import integrate

from .droplet import DropletGeometry, critical_indices
from .errors import DivergenceError, GeometryError, IdentityViolation, QuadratureError, SingularError
from .potential import Perturbation, RadialPotential, TestFunction, constant, curvature_B, log_modulus

QUAD_TOL = 1e-13
ELL_GATE = 1e-9

FunctionLike = Union[TestFunction, Callable, float, int]


def _quad(f: Callable[[float], float], a: float, b: float, points=None) -> float:
    """Adaptive Gauss–Kronrod integral of a smooth integrand; raises on failure."""
    if b <= a:
        return 0.0
    val, err = integrate.quad(f, a, b, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=400, points=points)
    if not np.isfinite(val) or err > 1e-9 * max(1.0, abs(val)):
        raise QuadratureError(f"radial integral did not converge (estimate {err:.2e})")
    return float(val)


def _as_test_function(f: FunctionLike) -> TestFunction:
    if isinstance(f, TestFunction):
        return f
    if isinstance(f, (int, float)):
        return constant(float(f))
    if callable(f):
        # derivatives are obtained by finite differences when a plain callable is given
        from .potential import _fd_derivative

        def deriv(r, k):
            return f(r) if k == 0 else _fd_derivative(f, np.asarray(r, dtype=float), k)

        return TestFunction(deriv, name=getattr(f, "__name__", "callable"))
    raise TypeError(f"cannot use {type(f).__name__} as a test function")


def _check_positive(P, G):
    for a, b in G.components:
        grid = np.linspace(a, b, 257)
        if np.any(P.laplacian(grid) <= 0):
            raise SingularError("Delta Q is not positive on the droplet")


def _dlogL(P, r):
    return float(P.laplacian(r, 1)) / float(P.laplacian(r))


def _sigma_density(P, r):
    return 2.0 * r * float(P.laplacian(r))


# ---------------------------------------------------------------------------
# energy, entropy, F_Q


def energy_IQ(P: RadialPotential, G: DropletGeometry) -> float:
    terms = []
    for nu, (a, b) in enumerate(G.components):
        terms.append(_quad(lambda r: float(P.d(r)) * _sigma_density(P, r), a, b))
        terms.append(0.25 * _quad(lambda r: r * float(P.d(r, 1)) ** 2, a, b))
        Mprev = G.prev_mass(nu)
        if Mprev > 0:
            terms.append(Mprev**2 * math.log(a))
        terms.append(-G.masses[nu] ** 2 * math.log(b))
    return math.fsum(terms)


def entropy_EQ(P: RadialPotential, G: DropletGeometry) -> float:
    _check_positive(P, G)
    return math.fsum(
        _quad(lambda r: math.log(float(P.laplacian(r))) * _sigma_density(P, r), a, b) for a, b in G.components
    )


def fq_component(P: RadialPotential, a: float, b: float) -> float:
    """``F_Q`` of the annulus ``A(a, b)``, or of the disk ``D_b`` when ``a == 0``."""
    Lb, L1b = float(P.laplacian(b)), float(P.laplacian(b, 1))
    if Lb <= 0:
        raise SingularError("Delta Q is not positive at the outer edge")
    bulk = _quad(lambda r: _dlogL(P, r) ** 2 * r, a, b) / 24.0
    if a == 0.0:
        return math.log(1.0 / (b * b * Lb)) / 12.0 - b * L1b / Lb / 16.0 + bulk
    La, L1a = float(P.laplacian(a)), float(P.laplacian(a, 1))
    if La <= 0:
        raise SingularError("Delta Q is not positive at the inner edge")
    return (
        math.log(a * a * La / (b * b * Lb)) / 12.0
        - (b * L1b / Lb - a * L1a / La) / 16.0
        + bulk
    )


def fq_total(P: RadialPotential, G: DropletGeometry) -> tuple[float, List[float]]:
    parts = [fq_component(P, a, b) for a, b in G.components]
    return math.fsum(parts), parts


def b_integral(P: RadialPotential, a: float, b: float) -> float:
    """``int_a^b B(r) dsigma(r)`` for ``a > 0``."""
    return _quad(lambda r: float(curvature_B(P, r)) * _sigma_density(P, r), a, b)


def b_identity_residual(P: RadialPotential, a: float, b: float) -> float:
    """``int_A B dsigma - [F_Q(A) - (1/4) log(Delta Q(b)/Delta Q(a)) + (1/3) log(b/a)]``."""
    lhs = b_integral(P, a, b)
    rhs = fq_component(P, a, b) - 0.25 * math.log(float(P.laplacian(b)) / float(P.laplacian(a))) + math.log(b / a) / 3.0
    return lhs - rhs


def disk_fq_from_b_integral(P: RadialPotential, b: float, eps_list=(0.08, 0.04, 0.02, 0.01)) -> float:
    """Recover ``F_Q(D_b)`` from ``int_eps^b B dsigma`` by extrapolating ``eps -> 0``.

    For each ``eps`` the annulus identity gives an estimate
    ``int_eps^b B dsigma + (1/4) log(Delta Q(b)/Delta Q(eps)) - (1/3) log(b/eps) - (1/12) log(eps^2 Delta Q(eps))``
    whose error is ``O(eps^2)``; two Richardson steps remove it.
    """
    est = []
    for e in eps_list:
        Le = float(P.laplacian(e))
        est.append(
            b_integral(P, e, b)
            + 0.25 * math.log(float(P.laplacian(b)) / Le)
            - math.log(b / e) / 3.0
            - math.log(e * e * Le) / 12.0
        )
    # Richardson on halving eps with error expansion in eps^2, eps^4, ...
    T = list(est)
    power = 2
    while len(T) > 1:
        fac = 2.0**power
        T = [(fac * T[i + 1] - T[i]) / (fac - 1.0) for i in range(len(T) - 1)]
        power += 2
    return T[0]


# ---------------------------------------------------------------------------
# sigma moments


def ell_moment_closed_form(P: RadialPotential, G: DropletGeometry) -> float:
    """``int l dsigma = -(q(b_N) - 2 log b_N - q(a_0))``."""
    bN = G.components[-1][1]
    a0 = G.components[0][0]
    return -(float(P.d(bN)) - 2.0 * math.log(bN) - float(P.d(a0)))


def sigma_moment(P: RadialPotential, G: DropletGeometry, f: FunctionLike, gate: bool = True) -> float:
    """``int f dsigma``; for ``f = l`` the closed form is checked to 1e-9."""
    fn = _as_test_function(f)
    val = math.fsum(
        _quad(lambda r: float(fn.d(r)) * _sigma_density(P, r), a, b) for a, b in G.components
    )
    if gate and fn.name == "ell":
        ref = ell_moment_closed_form(P, G)
        if abs(ref - val) > ELL_GATE:
            raise IdentityViolation(f"log-moment identity violated by {abs(ref - val):.2e}")
    return val


# ---------------------------------------------------------------------------
# expectations and variances


def e_component(P: RadialPotential, G: DropletGeometry, f: FunctionLike, nu: int) -> float:
    fn = _as_test_function(f)
    a, b = G.components[nu]
    bulk = _quad(lambda r: r * float(fn.d(r, 1)) * _dlogL(P, r), a, b)
    outer = b * float(fn.d(b, 1))
    inner = a * float(fn.d(a, 1)) if a > 0 else 0.0
    return 0.25 * (outer - inner) - 0.25 * bulk


def e_component_direct(P: RadialPotential, G: DropletGeometry, f: FunctionLike, nu: int) -> float:
    """Same quantity from the bulk + boundary form (no integration by parts)."""
    fn = _as_test_function(f)
    a, b = G.components[nu]

    def bulk_integrand(r):
        # (r L')' = L' + r L''  with  L'' = (Delta Q''/Delta Q) - (Delta Q'/Delta Q)^2
        L0, L1, L2 = float(P.laplacian(r)), float(P.laplacian(r, 1)), float(P.laplacian(r, 2))
        return float(fn.d(r)) * (L1 / L0 + r * (L2 / L0 - (L1 / L0) ** 2))

    bulk = 0.25 * _quad(bulk_integrand, a, b)
    out = 0.25 * b * (float(fn.d(b, 1)) - float(fn.d(b)) * _dlogL(P, b))
    inn = 0.25 * a * (float(fn.d(a, 1)) - float(fn.d(a)) * _dlogL(P, a)) if a > 0 else 0.0
    return bulk + out - inn


def e_ell_component(P: RadialPotential, G: DropletGeometry, nu: int) -> float:
    """``e_{nu, l} = (1/2)[a_nu = 0] - (1/2)(L(b_nu) - L(a_nu))``."""
    a, b = G.components[nu]
    return 0.5 * (1.0 if a == 0.0 else 0.0) - 0.5 * (
        math.log(float(P.laplacian(b))) - math.log(float(P.laplacian(a)))
    )


def boundary_expectation(
    P: RadialPotential,
    G: DropletGeometry,
    f: Optional[FunctionLike],
    variant: str = "e",
    nu: Optional[int] = None,
    alpha: float = 0.0,
) -> float:
    """Variants: ``e`` (all components), ``e_nu`` (one component), ``e_h_alpha``
    (conical correction) and ``e_tilde_ell`` (log statistic, ``f`` ignored)."""
    _check_positive(P, G)
    comps = range(len(G.components))
    if variant == "e":
        return math.fsum(e_component(P, G, f, k) for k in comps)
    if variant == "e_nu":
        if nu is None:
            raise ValueError("component index required")
        return e_component(P, G, f, nu)
    if variant == "e_h_alpha":
        if G.euler_char != 1:
            raise GeometryError("the conical correction needs a central disk")
        fn = _as_test_function(f)
        extra = [alpha * (float(fn.d(G.b[0])) - float(fn.d(0.0)))]
        for k in range(1, len(G.components)):
            a, b = G.components[k]
            extra.append(0.5 * alpha * 4.0 * (float(fn.d(b)) - float(fn.d(a))))
        return math.fsum([boundary_expectation(P, G, fn, "e")] + extra)
    if variant == "e_tilde_ell":
        return math.fsum(e_ell_component(P, G, k) for k in comps) + 0.5 * math.log(2.0 * math.pi)
    raise ValueError(f"unknown variant {variant!r}")


def v_component(P: RadialPotential, G: DropletGeometry, f: FunctionLike, nu: int) -> float:
    fn = _as_test_function(f)
    a, b = G.components[nu]
    if a == 0.0 and fn.singular_at_origin:
        raise DivergenceError("the variance of the log statistic diverges on a central disk")
    return 0.5 * _quad(lambda r: r * float(fn.d(r, 1)) ** 2, a, b)


def variance_v(
    P: RadialPotential,
    G: DropletGeometry,
    f: Optional[FunctionLike],
    variant: str = "v",
    nu: Optional[int] = None,
) -> float:
    """Variants: ``v`` (all components), ``v_nu`` and ``v_tilde_ell``."""
    if variant == "v":
        return math.fsum(v_component(P, G, f, k) for k in range(len(G.components)))
    if variant == "v_nu":
        if nu is None:
            raise ValueError("component index required")
        return v_component(P, G, f, nu)
    if variant == "v_tilde_ell":
        if G.euler_char != 1:
            raise GeometryError("the log-statistic variance needs a central disk")
        b0 = G.b[0]
        parts = [math.log(b0 * b0 * float(P.laplacian(0.0)))]
        parts += [2.0 * math.log(b / a) for a, b in G.components[1:]]
        return math.fsum(parts)
    raise ValueError(f"unknown variant {variant!r}")


# ---------------------------------------------------------------------------
# gap constants


@dataclass
class GapConstants:
    rho: List[float]
    theta: List[float]
    c: List[float]
    mu: List[float]
    x: List[float]
    m: List[int]
    K_n: float

    @property
    def N(self) -> int:
        return len(self.rho)

    def to_dict(self) -> dict:
        return asdict(self)


def gap_constants(
    P: RadialPotential,
    G: DropletGeometry,
    h: Optional[FunctionLike],
    pert: Perturbation,
    n: int,
    allow_empty: bool = False,
) -> GapConstants:
    if G.N == 0:
        if allow_empty:
            return GapConstants([], [], [], [], [], [], 0.0)
        raise GeometryError("the droplet has no spectral gap")
    fn = _as_test_function(h if h is not None else 0.0)
    idx = critical_indices(G, n)
    rho, theta, c, mu, xs, ms = [], [], [], [], [], []
    for nu, (m, x) in enumerate(idx):
        b, a1 = G.b[nu], G.a[nu + 1]
        r = b / a1
        th = math.sqrt(float(P.laplacian(b)) / float(P.laplacian(a1))) * r ** (2.0 * (x - pert.alpha))
        cc = float(fn.d(a1)) - float(fn.d(b))
        rho.append(r)
        theta.append(th)
        c.append(cc)
        mu.append(th * math.exp(pert.s * cc))
        xs.append(x)
        ms.append(m)
    K = math.fsum(cc * x for cc, x in zip(c, xs))
    return GapConstants(rho, theta, c, mu, xs, ms, K)


@dataclass
class FunctionalReport:
    I_Q: float
    E_Q: float
    F_Q: float
    F_Q_parts: List[float]
    euler_char: int
    sigma_h: float
    e_h: float
    v_h: float

    def to_dict(self) -> dict:
        return asdict(self)


def functional_report(P: RadialPotential, G: DropletGeometry, h: Optional[FunctionLike] = None) -> FunctionalReport:
    hh = h if h is not None else 0.0
    F, parts = fq_total(P, G)
    return FunctionalReport(
        I_Q=energy_IQ(P, G),
        E_Q=entropy_EQ(P, G),
        F_Q=F,
        F_Q_parts=parts,
        euler_char=G.euler_char,
        sigma_h=sigma_moment(P, G, hh),
        e_h=boundary_expectation(P, G, hh, "e"),
        v_h=variance_v(P, G, hh, "v"),
    )
