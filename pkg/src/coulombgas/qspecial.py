"""q-series, theta functions, Barnes G and Euler–Maclaurin summation.

Everything that can underflow is carried in log space: products such as
``(z; q)_inf`` with ``q = rho^2`` close to 1 or ``z`` tiny are summed as
``sum log1p(-z q^i)``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, special

from .errors import DomainError, PoleError

TRUNCATION = 1e-18

# B_2, B_4, B_6, B_8 exactly (scipy.special.bernoulli is only good to ~1e-12 relative)
_BERNOULLI_EVEN = {2: 1.0 / 6.0, 4: -1.0 / 30.0, 6: 1.0 / 42.0, 8: -1.0 / 30.0}


# ---------------------------------------------------------------------------
# constants


@dataclass(frozen=True)
class MathConstants:
    # zeta'(-1) = 1/12 - log A, A the Glaisher–Kinkelin constant
    zeta_prime_minus1: float = -0.16542114370045092921
    glaisher: float = 1.28242712910062263687534256886979
    log_2pi: float = math.log(2.0 * math.pi)
    euler_gamma: float = 0.57721566490153286060651209008240

    @staticmethod
    def log_factorial(n: int) -> float:
        if n < 0:
            raise DomainError("factorial of a negative integer")
        return math.lgamma(n + 1.0)


CONSTANTS = MathConstants()


def math_constants() -> MathConstants:
    return CONSTANTS


# ---------------------------------------------------------------------------
# q-Pochhammer symbols


def qpoch_finite(z, q: float, k: int):
    """``(z; q)_k = prod_{i<k} (1 - z q^i)``; ``k = 0`` gives 1."""
    if k < 0:
        raise DomainError("k must be non-negative")
    out = 1.0
    zi = z
    for _ in range(k):
        out *= 1.0 - zi
        zi *= q
    return out


def qpoch_infinite_log(z: float, q: float, return_terms: bool = False):
    """``log (z; q)_inf`` for real ``z`` and ``0 < q < 1``.

    The product is truncated once ``|z| q^i < 1e-18``; the remaining factors
    contribute ``-z q^K / (1 - q)`` to first order, which is added.
    """
    if not 0.0 < q < 1.0:
        raise DomainError("q must lie in (0, 1)")
    if isinstance(z, complex):
        raise DomainError("only real arguments are supported in log space")
    z = float(z)
    if z == 0.0:
        return (0.0, 0) if return_terms else 0.0
    acc = []
    zi = z
    k = 0
    while abs(zi) >= TRUNCATION:
        f = -zi
        if 1.0 + f <= 0.0:
            raise PoleError(f"factor 1 - z q^{k} = {1.0 + f:.3g} is not positive")
        acc.append(math.log1p(f))
        zi *= q
        k += 1
        if k > 10_000_000:
            raise DomainError("q too close to 1 for the truncated product")
    tail = -zi / (1.0 - q)
    val = math.fsum(acc) + tail
    return (val, k) if return_terms else val


def q_binomial_check(z: float, q: float, n: int) -> float:
    """Residual of ``(z;q)_n = sum_k [n choose k]_q q^{k(k-1)/2} (-z)^k``."""
    if n > 60:
        raise DomainError("q-binomial check restricted to n <= 60")
    lhs = qpoch_finite(z, q, n)
    qq = [qpoch_finite(q, q, k) for k in range(n + 1)]
    rhs = math.fsum(qq[n] / (qq[k] * qq[n - k]) * q ** (k * (k - 1) / 2.0) * (-z) ** k for k in range(n + 1))
    return abs(lhs - rhs) / max(1.0, abs(lhs))


def euler_identity_residual(theta: float, q: float, c: float, s: float) -> float:
    """Relative residual of ``sum_k q^{k^2/2} x^k / (q;q)_k = prod_j (1 + x q^{j+1/2})``, ``x = theta e^{cs}``."""
    x = theta * math.exp(c * s)
    log_terms = []
    lq = math.log(q)
    log_qq = 0.0
    k = 0
    while True:
        t = 0.5 * k * k * lq + k * math.log(x) - log_qq
        log_terms.append(t)
        if k > 5 and t < max(log_terms) - 45.0:
            break
        k += 1
        log_qq += math.log1p(-(q**k))
    top = max(log_terms)
    lhs = top + math.log(math.fsum(math.exp(t - top) for t in log_terms))
    rhs = qpoch_infinite_log(-x * math.sqrt(q), q)
    return abs(math.expm1(lhs - rhs))


# ---------------------------------------------------------------------------
# theta functions


def jacobi_theta(z: complex, tau: complex) -> complex:
    """``sum_l exp(2 pi i l z) exp(pi i l^2 tau)``."""
    tau = complex(tau)
    z = complex(z)
    if tau.imag <= 0:
        raise DomainError("theta series needs Im(tau) > 0")
    total = 1.0 + 0j
    l = 1
    while True:
        gauss = math.exp(-math.pi * l * l * tau.imag)
        grow = math.exp(2.0 * math.pi * l * abs(z.imag))
        if gauss * grow < TRUNCATION and l > 1:
            break
        weight = cmath.exp(1j * math.pi * l * l * tau)
        total += weight * (cmath.exp(2j * math.pi * l * z) + cmath.exp(-2j * math.pi * l * z))
        l += 1
        if l > 100000:
            raise DomainError("theta series failed to converge")
    return total


def big_theta(x: float, p: float, q_arg: float) -> float:
    """``x(x-1) log p + x log q + log(-q p^{2x}; p^2)_inf + log(-q^{-1} p^{2(1-x)}; p^2)_inf``."""
    if not 0.0 < p < 1.0 or q_arg <= 0:
        raise DomainError("need 0 < p < 1 and q > 0")
    lp, lq = math.log(p), math.log(q_arg)
    return (
        x * (x - 1.0) * lp
        + x * lq
        + qpoch_infinite_log(-math.exp(lq + 2.0 * x * lp), p * p)
        + qpoch_infinite_log(-math.exp(-lq + 2.0 * (1.0 - x) * lp), p * p)
    )


def big_theta_via_theta(x: float, p: float, q_arg: float) -> float:
    """The same quantity through a Jacobi theta function with nome ``p``."""
    lp, lq = math.log(p), math.log(q_arg)
    L = -lp  # log(1/p) > 0
    th = jacobi_theta(x + 0.5 + 0.5 * lq / lp, 1j * math.pi / L)
    return (
        0.5 * math.log(math.pi * q_arg * p ** (-0.5) / L)
        + lq * lq / (4.0 * L)
        - qpoch_infinite_log(p * p, p * p)
        + math.log(th.real)
    )


def theta_bridge_residual(x: float, p: float, q_arg: float) -> float:
    return abs(big_theta(x, p, q_arg) - big_theta_via_theta(x, p, q_arg))


# ---------------------------------------------------------------------------
# displacement term


def displacement_Gn(rho: Sequence[float], mu: Sequence[float], x: Sequence[float]) -> float:
    """``sum (x log mu - x^2 log rho) + log(-rho mu; rho^2)_inf + log(-rho/mu; rho^2)_inf``."""
    total = []
    for r, m, xx in zip(rho, mu, x):
        if not 0.0 < r < 1.0 or m <= 0:
            raise DomainError("gap constants need 0 < rho < 1 and mu > 0")
        total.append(xx * math.log(m) - xx * xx * math.log(r))
        total.append(qpoch_infinite_log(-r * m, r * r))
        total.append(qpoch_infinite_log(-r / m, r * r))
    return math.fsum(total)


def displacement_Gn_via_theta(rho, mu, x) -> float:
    """``sum_nu Theta(x_nu; rho_nu, rho_nu^{1 - 2 x_nu} mu_nu)`` (independent route)."""
    return math.fsum(big_theta(xx, r, r ** (1.0 - 2.0 * xx) * m) for r, m, xx in zip(rho, mu, x))


# ---------------------------------------------------------------------------
# Barnes G


def log_barnes_g(w: float, K: int = 200) -> float:
    """``log G(w)`` for ``w > 0`` from the product expansion of ``G(1 + z)``.

    The sum over ``k > K`` is evaluated in closed form via Hurwitz zeta values:
    ``k log(1 + z/k) - z + z^2/(2k) = sum_{m>=3} (-1)^{m+1} z^m / (m k^{m-1})``.
    """
    if not w > 0:
        raise DomainError("Barnes G is evaluated for positive arguments only")
    z = w - 1.0
    g = CONSTANTS.euler_gamma
    head = 0.5 * z * CONSTANTS.log_2pi - 0.5 * z * (z + 1.0) - 0.5 * g * z * z
    k = np.arange(1, K + 1, dtype=float)
    body = math.fsum(k * np.log1p(z / k) - z + z * z / (2.0 * k))
    tail = 0.0
    if z != 0.0:
        for m in range(3, 400):
            term = (-1) ** (m + 1) * z**m / m * special.zeta(m - 1, K + 1)
            tail += term
            if abs(term) < 1e-18:
                break
    return head + body + tail


# ---------------------------------------------------------------------------
# Euler–Maclaurin


@dataclass
class EMResult:
    value: float
    bound: float


def euler_maclaurin_sum(
    f: Callable[[float, int], float],
    m: int,
    n: int,
    d: int,
    antiderivative: Optional[Callable[[float], float]] = None,
) -> EMResult:
    """``sum_{j=m}^{n-1} f(j)`` by Euler–Maclaurin with ``d - 1`` Bernoulli corrections.

    ``f(x, k)`` returns the k-th derivative.  The returned bound is
    ``4 zeta(2d) / (2 pi)^{2d} * int_m^n |f^{(2d)}|``.
    """
    if not 1 <= d <= 4:
        raise DomainError("d must lie in 1..4")
    if antiderivative is not None:
        integral = antiderivative(n) - antiderivative(m)
    else:
        integral = integrate.quad(lambda x: f(x, 0), m, n, epsabs=0.0, epsrel=1e-13, limit=200)[0]
    terms = [integral, -(f(n, 0) - f(m, 0)) / 2.0]
    for k in range(1, d):
        terms.append(_BERNOULLI_EVEN[2 * k] / math.factorial(2 * k) * (f(n, 2 * k - 1) - f(m, 2 * k - 1)))
    absint = integrate.quad(lambda x: abs(f(x, 2 * d)), m, n, limit=200)[0]
    bound = 4.0 * special.zeta(2 * d) / (2.0 * math.pi) ** (2 * d) * absint
    return EMResult(math.fsum(terms), float(bound))
