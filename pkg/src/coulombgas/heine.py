"""Heine and discrete-normal laws, and the predicted fluctuation CGFs.

``He(theta, q)`` is the law on ``k = 0, 1, 2, ...`` with

    P(X = k) = q^{k(k-1)/2} theta^k / ((q; q)_k (-theta; q)_inf).

It describes how many particles are displaced across a spectral gap (or sit
on an outpost).  The difference of two independent Heine variables
``He(theta rho, rho^2) - He(rho / theta, rho^2)`` is discrete normal
``dN(theta rho, rho^2)`` with ``P(Y = k) ∝ lambda^k q^{k(k-1)/2}`` on the
integers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .errors import DomainError, IdentityViolation
from .qspecial import displacement_Gn, log_barnes_g, qpoch_infinite_log

PMF_TAIL = 1e-14
PATH_TOL = 1e-10


def _check(theta: float, q: float) -> None:
    if not theta > 0:
        raise DomainError("theta must be positive")
    if not 0.0 < q < 1.0:
        raise DomainError("q must lie in (0, 1)")


def _log_pmf_table(log_weight, log_norm: float, start: int, step: int) -> list[tuple[int, float]]:
    """Walk ``k = start, start + step, ...`` until the pmf is negligible and decreasing."""
    out = []
    k = start
    prev = -math.inf
    while True:
        lp = log_weight(k) - log_norm
        out.append((k, lp))
        if lp < math.log(PMF_TAIL) - 10.0 and lp < prev:
            return out
        prev = lp
        k += step
        if abs(k - start) > 100_000:
            raise DomainError("pmf table did not terminate")


@dataclass(frozen=True)
class HeineDist:
    theta: float
    q: float

    def __post_init__(self):
        _check(self.theta, self.q)

    @cached_property
    def log_norm(self) -> float:
        """``log (-theta; q)_inf``."""
        return qpoch_infinite_log(-self.theta, self.q)

    def log_pmf(self, k: int) -> float:
        if k < 0:
            return -math.inf
        lq = math.log(self.q)
        log_qq = math.fsum(math.log1p(-(self.q ** (i + 1))) for i in range(k))
        return 0.5 * k * (k - 1) * lq + k * math.log(self.theta) - log_qq - self.log_norm

    def pmf(self, k: int) -> float:
        return math.exp(self.log_pmf(k))

    @cached_property
    def _table(self) -> tuple[np.ndarray, np.ndarray]:
        """Support and probabilities up to cumulative mass ``1 - 1e-14``.

        The log weights are accumulated with the ratio
        ``p(k+1)/p(k) = theta q^k / (1 - q^{k+1})``.
        """
        lt, lq = math.log(self.theta), math.log(self.q)
        logs = [-self.log_norm]
        cum = math.exp(logs[0])
        k = 0
        while cum < 1.0 - PMF_TAIL or logs[-1] > math.log(PMF_TAIL):
            logs.append(logs[-1] + lt + k * lq - math.log1p(-(self.q ** (k + 1))))
            cum += math.exp(logs[-1])
            k += 1
            if k > 100_000:
                raise DomainError("Heine pmf table did not terminate")
        return np.arange(len(logs)), np.exp(np.asarray(logs))

    def support_pmf(self) -> tuple[np.ndarray, np.ndarray]:
        return self._table

    def cgf_scaled(self, c: float, s: float) -> float:
        """``log E exp(c s X) = log (-theta e^{cs}; q)_inf - log (-theta; q)_inf``."""
        return heine_cgf_scaled(self, c, s)

    def moments(self) -> tuple[float, float]:
        return heine_moments(self)

    def sample(self, rng: np.random.Generator, size: Optional[int] = None):
        return heine_sample(self, rng, size)


def heine_pmf(D: HeineDist, k: int) -> float:
    return D.pmf(k)


def heine_cgf_scaled(D: HeineDist, c: float, s: float) -> float:
    if c == 0.0 or s == 0.0:
        return 0.0
    return qpoch_infinite_log(-D.theta * math.exp(c * s), D.q) - D.log_norm


def heine_moments(D: HeineDist) -> tuple[float, float]:
    """``(E X, E [X]_q)`` where ``[x]_q = (1 - q^x) / (1 - q)``.

    ``E X = sum_j theta q^j / (1 + theta q^j)`` (derivative of the CGF at 0)
    and ``E q^X = 1 / (1 + theta)``, so ``E [X]_q = theta / ((1 + theta)(1 - q))``.
    """
    terms = []
    j = 0
    while True:
        z = D.theta * D.q**j
        terms.append(z / (1.0 + z))
        if z < 1e-17:
            break
        j += 1
    mean = math.fsum(terms)
    q_mean = D.theta / ((1.0 + D.theta) * (1.0 - D.q))
    return mean, q_mean


def heine_sample(D: HeineDist, rng: np.random.Generator, size: Optional[int] = None):
    """Inverse-CDF draws from the table truncated at cumulative ``1 - 1e-14``."""
    ks, p = D.support_pmf()
    cdf = np.cumsum(p)
    cdf /= cdf[-1]
    u = rng.random(size)
    out = np.searchsorted(cdf, u, side="right")
    out = np.minimum(out, len(ks) - 1)
    return int(out) if size is None else out.astype(np.int64)


# ---------------------------------------------------------------------------
# discrete normal


@dataclass(frozen=True)
class DiscreteNormal:
    lam: float
    q: float

    def __post_init__(self):
        _check(self.lam, self.q)

    def _log_weight(self, k: int) -> float:
        return k * math.log(self.lam) + 0.5 * k * (k - 1) * math.log(self.q)

    @cached_property
    def _table(self) -> tuple[np.ndarray, np.ndarray]:
        # the weight is a Gaussian in k centred near 1/2 - log(lam)/log(q)
        centre = int(round(0.5 - math.log(self.lam) / math.log(self.q)))
        peak = self._log_weight(centre)
        up = _log_pmf_table(self._log_weight, peak, centre, 1)
        down = _log_pmf_table(self._log_weight, peak, centre - 1, -1)
        pts = sorted(down + up)
        ks = np.array([k for k, _ in pts])
        lw = np.array([w for _, w in pts])
        top = lw.max()
        log_norm = top + math.log(math.fsum(np.exp(lw - top)))
        return ks, np.exp(lw - log_norm)

    def support_pmf(self) -> tuple[np.ndarray, np.ndarray]:
        return self._table

    def pmf(self, k: int) -> float:
        ks, p = self._table
        idx = np.searchsorted(ks, k)
        if idx < len(ks) and ks[idx] == k:
            return float(p[idx])
        return 0.0


def dnormal_check(X_plus: HeineDist, X_minus: HeineDist) -> float:
    """Total-variation distance between the law of ``X+ - X-`` and ``dN(theta rho, rho^2)``.

    ``X+ ~ He(theta rho, rho^2)`` and ``X- ~ He(rho / theta, rho^2)``; the
    dN parameter is read off ``X+``.
    """
    if abs(X_plus.q - X_minus.q) > 1e-15 * X_plus.q:
        raise DomainError("both Heine laws must share q")
    kp, pp = X_plus.support_pmf()
    km, pm = X_minus.support_pmf()
    conv = np.convolve(pp, pm[::-1])
    diff_support = np.arange(-km[-1], kp[-1] + 1)
    dn = DiscreteNormal(X_plus.theta, X_plus.q)
    kd, pd = dn.support_pmf()
    lo = min(diff_support[0], kd[0])
    hi = max(diff_support[-1], kd[-1])
    a = np.zeros(hi - lo + 1)
    b = np.zeros(hi - lo + 1)
    a[diff_support - lo] = conv
    b[kd - lo] = pd
    return 0.5 * math.fsum(np.abs(a - b))


# ---------------------------------------------------------------------------
# predicted CGFs


def _heine_sum_path(gaps, s: float) -> float:
    total = [s * gaps.K_n]
    for rho, th, c in zip(gaps.rho, gaps.theta, gaps.c):
        plus = HeineDist(th * rho, rho * rho)
        minus = HeineDist(rho / th, rho * rho)
        total.append(heine_cgf_scaled(plus, c, s))
        total.append(heine_cgf_scaled(minus, -c, s))
    return math.fsum(total)


def _gn_difference_path(gaps, s: float) -> float:
    mu_s = [th * math.exp(s * c) for th, c in zip(gaps.theta, gaps.c)]
    return displacement_Gn(gaps.rho, mu_s, gaps.x) - displacement_Gn(gaps.rho, gaps.theta, gaps.x)


def gap_cgf_two_paths(gaps, s: float) -> tuple[float, float]:
    """Gap contribution computed as a Heine sum and as a ``G_n`` difference."""
    if gaps is None or gaps.N == 0:
        return 0.0, 0.0
    return _heine_sum_path(gaps, s), _gn_difference_path(gaps, s)


def predicted_fluct_cgf(
    gaps,
    e_term: float,
    v_term: float,
    s: float,
    mode: str = "regular",
    *,
    outpost=None,
    n: Optional[int] = None,
    gaps_zero=None,
) -> float:
    """Leading-order prediction of a fluctuation CGF.

    ``regular`` / ``conical``
        ``s e + s^2 v / 2`` plus the gap terms; ``gaps`` must carry the
        ``theta_{nu, alpha}`` of the relevant point charge (``alpha = 0`` for
        ``regular``).  The gap terms are evaluated both as a sum of Heine CGFs
        (with ``s K_n``) and as ``G_n(s) - G_n(0)``; a disagreement above
        ``1e-10`` raises :class:`IdentityViolation`.
    ``outpost``
        ``s e + s^2 v / 2 + log E exp(s c X)`` with ``X ~ He(theta rho, rho^2)``
        taken from ``outpost`` (an object with ``rho``, ``theta``, ``c``).
    ``log_statistic``
        CGF of ``fluct_n ell`` at ``s = alpha``:
        ``(alpha^2/2) log n + alpha e~ + (alpha^2/2) v~ - log G(1 + alpha)
        + G_n(0, alpha) - G_n(0, 0)``; ``gaps`` are the constants at
        ``alpha``, ``gaps_zero`` those at ``0``.
    """
    gauss = s * e_term + 0.5 * s * s * v_term
    if mode in ("regular", "conical"):
        if outpost is not None:
            raise DomainError(f"mode {mode!r} takes no outpost parameters")
        heine, gdiff = gap_cgf_two_paths(gaps, s)
        if abs(heine - gdiff) > PATH_TOL * max(1.0, abs(heine)):
            raise IdentityViolation(f"Heine-sum path {heine!r} and G_n path {gdiff!r} disagree")
        return gauss + heine
    if mode == "outpost":
        if outpost is None:
            raise DomainError("outpost mode needs outpost parameters")
        if outpost.rho == 0.0:
            return gauss
        X = HeineDist(outpost.theta * outpost.rho, outpost.rho**2)
        return gauss + heine_cgf_scaled(X, outpost.c, s)
    if mode == "log_statistic":
        if n is None:
            raise DomainError("log_statistic mode needs n")
        alpha = s
        if alpha <= -1:
            raise DomainError("alpha must exceed -1")
        gn = 0.0
        if gaps is not None and gaps.N:
            if gaps_zero is None:
                raise DomainError("log_statistic mode needs the alpha = 0 gap constants")
            gn = displacement_Gn(gaps.rho, gaps.mu, gaps.x) - displacement_Gn(gaps_zero.rho, gaps_zero.mu, gaps_zero.x)
        return 0.5 * alpha * alpha * math.log(n) + gauss - log_barnes_g(1.0 + alpha) + gn
    raise DomainError(f"unknown mode {mode!r}")
