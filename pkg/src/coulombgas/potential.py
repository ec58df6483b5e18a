"""Radial potentials, test functions and the local quantities derived from them.

All radial functions are evaluated through ``d(r, k)`` returning the k-th
derivative; ``k = 0`` is the function itself.  Everything is vectorised over
``r`` and returns floats for scalar input.

Conventions: ``Delta = (d_xx + d_yy) / 4``, so for a radial profile ``q``

    Delta Q(r) = (q''(r) + q'(r) / r) / 4,        T(r) = r q'(r) / 2,

where ``T`` is the mass function (``T(b) = sigma(D_b)`` on the droplet).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import sympy as sp

from .errors import DomainError, SingularError

Deriv = Callable[[np.ndarray, int], np.ndarray]

SINGULAR_TOL = 1e-12
_FD_MAX_ORDER = 6


def _as_out(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def _fd_derivative(f: Callable, r: np.ndarray, k: int) -> np.ndarray:
    """Central k-th difference with one Richardson step (error O(h^4)).

    The step grows with k so that roundoff (eps / h^k) stays below the
    truncation error.
    """
    base = max(1e-5, 10 ** (-16.0 / (k + 4)))
    h = base * np.maximum(1.0, np.abs(r))
    binom = [math.comb(k, i) * (-1) ** i for i in range(k + 1)]

    def stencil(step):
        acc = 0.0
        for i, c in enumerate(binom):
            acc = acc + c * f(r + (k / 2.0 - i) * step)
        return acc / step**k

    return (4.0 * stencil(h / 2.0) - stencil(h)) / 3.0


class RadialPotential:
    """Radially symmetric potential ``Q(z) = q(|z|)``.

    Parameters
    ----------
    q:
        Vectorised profile ``q(r)``.
    derivatives:
        Optional ``(r, k) -> q^{(k)}(r)`` for ``k = 1..6``.  Missing
        derivatives are obtained by central finite differences.
    laplacian:
        Optional ``(r, k) -> d^k/dr^k Delta Q(r)`` for ``k = 0..2``; needed
        only when the generic radial reduction is inaccurate (near ``r = 0``).
    r_max:
        Upper end of the working interval.  Defaults to ``2 b + 1`` where ``b``
        is the largest root of ``T(r) = 1``.
    """

    def __init__(
        self,
        q: Callable,
        *,
        derivatives: Optional[Deriv] = None,
        laplacian: Optional[Deriv] = None,
        r_max: Optional[float] = None,
        r_min: float = 1e-8,
        name: str = "custom",
        params: Optional[dict] = None,
    ):
        self._q = q
        self._derivs = derivatives
        self._lap = laplacian
        self.name = name
        self.params = dict(params or {})
        self.r_min = float(r_min)
        self.r_max = float("inf")
        self.r_max = float(r_max) if r_max is not None else 2.0 * self._outer_mass_root() + 1.0
        self.growth_margin = self._growth_margin()
        r0 = np.array([0.0])
        self.finite_at_origin = bool(np.isfinite(self._q(r0)).all())

    # -- evaluation -----------------------------------------------------

    def _check(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0) or np.any(r > self.r_max * (1 + 1e-12)) or np.any(~np.isfinite(r)):
            raise DomainError(
                f"radius outside working interval [0, {self.r_max:.6g}] for potential {self.name!r}"
            )
        return r

    def d(self, r, k: int = 0):
        """k-th derivative of the profile at ``r``."""
        r = self._check(r)
        return _as_out(self._d(r, k))

    def _d(self, r, k):
        if k == 0:
            return np.asarray(self._q(r), dtype=float)
        if self._derivs is not None:
            return np.asarray(self._derivs(r, k), dtype=float) * np.ones_like(r)
        if k > _FD_MAX_ORDER:
            raise ValueError(f"derivative order {k} not supported")
        return _fd_derivative(self._q, r, k)

    def __call__(self, r):
        return self.d(r, 0)

    def _lap_generic(self, r, k):
        q1, q2 = self._d(r, 1), self._d(r, 2)
        small = r < 1e-6
        rs = np.where(small, 1.0, r)
        if k == 0:
            val = (q2 + q1 / rs) / 4.0
            return np.where(small, q2 / 2.0, val)
        q3 = self._d(r, 3)
        if k == 1:
            val = (q3 + q2 / rs - q1 / rs**2) / 4.0
            return np.where(small, 0.0, val)
        if k == 2:
            q4 = self._d(r, 4)
            val = (q4 + q3 / rs - 2.0 * q2 / rs**2 + 2.0 * q1 / rs**3) / 4.0
            # the smooth limit at 0 is 3 q''''(0) / 8
            return np.where(small, 3.0 * q4 / 8.0, val)
        raise ValueError("laplacian derivative order must be 0, 1 or 2")

    def laplacian(self, r, k: int = 0):
        """``d^k/dr^k Delta Q(r)`` for ``k = 0, 1, 2``."""
        r = self._check(r)
        if self._lap is not None:
            return _as_out(np.asarray(self._lap(r, k), dtype=float) * np.ones_like(r))
        return _as_out(self._lap_generic(r, k))

    def mass(self, r):
        r = self._check(r)
        return _as_out(r * self._d(r, 1) / 2.0)

    def g(self, tau: float, r, k: int = 0):
        """``g_tau(r) = q(r) - 2 tau log r`` and its derivatives."""
        r = self._check(r)
        base = self._d(r, k)
        with np.errstate(divide="ignore"):
            if k == 0:
                # 0 * log 0 := 0
                corr = np.where(r > 0, 2.0 * tau * np.log(np.where(r > 0, r, 1.0)), 0.0)
                if tau != 0:
                    corr = np.where(r > 0, corr, -np.inf)
                return _as_out(base - corr)
            # d^k/dr^k (2 tau log r) = 2 tau (-1)^{k-1} (k-1)! / r^k
            corr = 2.0 * tau * (-1) ** (k - 1) * math.factorial(k - 1) / r**k
            return _as_out(base - corr)

    # -- construction helpers -------------------------------------------

    def _outer_mass_root(self) -> float:
        grid = np.geomspace(1e-6, 1e4, 20001)
        with np.errstate(over="ignore", invalid="ignore"):
            t = grid * self._d(grid, 1) / 2.0
        ok = np.isfinite(t)
        above = ok & (t >= 1.0)
        if not above.any():
            raise DomainError(f"mass function never reaches 1 for potential {self.name!r}")
        # last upward crossing of T = 1
        s = np.sign(np.where(ok, t - 1.0, np.nan))
        idx = np.where((s[:-1] < 0) & (s[1:] >= 0))[0]
        i = int(idx[-1]) if len(idx) else int(np.argmax(above))
        return float(grid[i + 1])

    def _growth_margin(self) -> float:
        rs = np.array([10.0, 100.0, 1000.0])
        with np.errstate(over="ignore", invalid="ignore"):
            vals = np.asarray(self._q(rs), dtype=float) / np.log(rs)
        vals = np.where(np.isnan(vals), -np.inf, vals)
        return float(np.min(vals) - 2.0)

    def check_derivatives(self, n_points: int = 100, rtol: float = 1e-6) -> float:
        """Largest relative mismatch between supplied and finite-difference derivatives.

        Raises ``ValueError`` above ``rtol``; returns the mismatch otherwise.
        Compares q', q'' and Delta Q (the quantities every consumer depends on).
        """
        if self._derivs is None:
            return 0.0
        lo = max(self.r_min, 1e-3)
        grid = np.linspace(lo, self.r_max * 0.999, n_points)
        worst = 0.0
        for k in (1, 2):
            a = self._d(grid, k)
            b = _fd_derivative(self._q, grid, k)
            scale = np.maximum(np.abs(a), np.max(np.abs(a)) * 1e-6 + 1e-300)
            worst = max(worst, float(np.max(np.abs(a - b) / scale)))
        if worst > rtol:
            raise ValueError(f"supplied derivatives disagree with finite differences ({worst:.2e})")
        return worst

    def __repr__(self):
        return f"RadialPotential({self.name!r}, r_max={self.r_max:.4g})"


# ---------------------------------------------------------------------------
# Module-level operations


def laplace_density(P: RadialPotential, r, k: int = 0):
    """``Delta Q(r)`` (``k = 0``) or its radial derivatives (``k = 1, 2``)."""
    return P.laplacian(r, k)


def mass_function(P: RadialPotential, r):
    return P.mass(r)


def g_tau(P: RadialPotential, tau: float, r, k: int = 0):
    return P.g(tau, r, k)


def _require_positive_lap(lap):
    if np.any(np.asarray(lap) <= SINGULAR_TOL):
        raise SingularError("Delta Q is not strictly positive")


def curvature_B(P: RadialPotential, r):
    """The function combining Delta Q and its first two radial derivatives that
    integrates (against sigma) to the F_Q term."""
    L0, L1, L2 = P.laplacian(r, 0), P.laplacian(r, 1), P.laplacian(r, 2)
    _require_positive_lap(L0)
    r = np.asarray(r, dtype=float)
    out = (
        -L2 / (32.0 * L0**2)
        - 19.0 * L1 / (96.0 * r * L0**2)
        + 5.0 * L1**2 / (96.0 * L0**3)
        + 1.0 / (12.0 * r**2 * L0)
    )
    return _as_out(out)


def peak_derivatives(P: RadialPotential, r):
    """``(g'', g''', g'''')`` at a critical point of ``g_tau`` expressed via Delta Q."""
    L0, L1, L2 = P.laplacian(r, 0), P.laplacian(r, 1), P.laplacian(r, 2)
    _require_positive_lap(L0)
    r = np.asarray(r, dtype=float)
    d2 = 4.0 * L0
    d3 = 4.0 * L1 - 4.0 * L0 / r
    d4 = 4.0 * L2 + 12.0 * L0 / r**2 - 4.0 * L1 / r
    return _as_out(d2), _as_out(d3), _as_out(d4)


# ---------------------------------------------------------------------------
# Test functions and perturbations


class TestFunction:
    """Radial test function ``h(r)`` with derivatives up to order 4."""

    __test__ = False  # not a pytest class

    def __init__(self, deriv: Deriv, *, name: str = "custom", bounded: bool = True, singular_at_origin=False):
        self._deriv = deriv
        self.name = name
        self.bounded = bounded
        self.singular_at_origin = singular_at_origin

    def d(self, r, k: int = 0):
        r = np.asarray(r, dtype=float)
        return _as_out(np.asarray(self._deriv(r, k), dtype=float) * np.ones_like(r))

    def __call__(self, r):
        return self.d(r, 0)

    def scaled(self, c: float) -> "TestFunction":
        return TestFunction(lambda r, k: c * self._deriv(r, k), name=f"{c}*{self.name}",
                            bounded=self.bounded, singular_at_origin=self.singular_at_origin)

    def __repr__(self):
        return f"TestFunction({self.name!r})"


_r = sp.Symbol("r", positive=True)


def _lambdify_derivs(expr, max_order):
    fns = [sp.lambdify(_r, sp.diff(expr, _r, k), "numpy") for k in range(max_order + 1)]

    def deriv(r, k):
        if k > max_order:
            raise ValueError(f"derivative order {k} not available")
        return fns[k](r)

    return deriv


def test_function_from_expr(expr, name: str, bounded: bool = True) -> TestFunction:
    """Build a :class:`TestFunction` from a sympy expression in ``r``."""
    return TestFunction(_lambdify_derivs(sp.sympify(expr), 4), name=name, bounded=bounded)


def constant(c: float = 1.0) -> TestFunction:
    return TestFunction(lambda r, k: c if k == 0 else 0.0, name=f"const({c})")


def power(p: int = 2) -> TestFunction:
    return test_function_from_expr(_r**p, name=f"r^{p}", bounded=False)


def log_modulus() -> TestFunction:
    """``l(r) = 2 log r``."""
    h = TestFunction(_lambdify_derivs(2 * sp.log(_r), 4), name="ell", bounded=False)
    h.singular_at_origin = True
    return h


def cosh_window(center: float, width: float) -> TestFunction:
    return test_function_from_expr(1 / sp.cosh((_r - center) / width), name=f"sech({center},{width})")


def smoothed_indicator(cut: float, width: float) -> TestFunction:
    """Smooth step from 0 (r < cut) to 1 (r > cut)."""
    return test_function_from_expr((1 + sp.tanh((_r - cut) / width)) / 2, name=f"step({cut},{width})")


@dataclass(frozen=True)
class Perturbation:
    """Perturbation ``Q - (s h + alpha l) / n`` with ``l = 2 log|z|``."""

    s: float = 0.0
    alpha: float = 0.0

    def __post_init__(self):
        if not self.alpha > -1.0:
            raise DomainError(f"alpha must exceed -1 (got {self.alpha})")


def combined_k(h: Optional[TestFunction], pert: Perturbation, r, k: int = 0):
    """``s h + alpha l`` and its first two derivatives."""
    r = np.asarray(r, dtype=float)
    if pert.alpha != 0 and np.any(r <= 0):
        raise DomainError("2 log r is singular at r = 0")
    out = np.zeros_like(r)
    if pert.s != 0 and h is not None:
        out = out + pert.s * np.asarray(h.d(r, k))
    if pert.alpha != 0:
        if k == 0:
            out = out + pert.alpha * 2.0 * np.log(r)
        else:
            out = out + pert.alpha * 2.0 * (-1) ** (k - 1) * math.factorial(k - 1) / r**k
    return _as_out(out)
