"""Exact sampling of the moduli and Monte Carlo checks of the fluctuation laws.

For a rotation-invariant ensemble the moduli ``|z_j|`` are (as a set)
independent, the ``j``-th having density proportional to

    r^{2j + 1 + 2 alpha} e^{s h(r)} e^{-n q(r)},

i.e. the normalised integrand of ``h_j``.  Radial linear statistics can
therefore be simulated exactly, one modulus at a time, without touching the
angles.  Each modulus is drawn by rejection from a Gaussian (inflated by
1.2) plus a uniform floor on its quadrature window; windows with several
peaks, windows anchored at a boundary, or proposals that accept too rarely
fall back to inverse-CDF sampling on a fine grid.
"""

from __future__ import annotations

import csv
import io
import math
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import functionals as fn
from .droplet import CutoffPolicy, DropletGeometry
from .errors import DegenerateError, DomainError, QuadratureError, TrackingError
from .free_energy import _log_integrand, log_partition_exact, norm_hj_quadrature, outpost_parameters, plan_windows
from .heine import HeineDist, heine_moments, predicted_fluct_cgf
from .potential import Perturbation, RadialPotential, TestFunction

INFLATE = 1.2
FLOOR_WEIGHT = 0.05
MIN_ACCEPT = 0.1
MAX_REJECT_ROUNDS = 10_000
GRID_POINTS = 4097
ENVELOPE_SAFETY = math.log(1.25)
BLOCK = 8192
TOP_FRACTION = 0.01
TOP_SHARE = 0.2
MIN_ESS = 10.0
RECORD_MAGIC = b"CGBATCH1"


# ---------------------------------------------------------------------------
# per-modulus samplers


@dataclass
class ModulusSampler:
    """Sampler for one modulus ``R_j``."""

    j: int
    method: str  # "rejection" or "inverse_cdf"
    logf: Callable[[np.ndarray], np.ndarray]
    lo: float
    hi: float
    center: float = float("nan")
    sigma: float = float("nan")
    log_env: float = float("nan")
    grid: Optional[np.ndarray] = None
    cdf: Optional[np.ndarray] = None
    acceptance: float = float("nan")

    # -- rejection -----------------------------------------------------------
    def _log_proposal(self, r):
        z = (r - self.center) / self.sigma
        a = (self.lo - self.center) / self.sigma
        b = (self.hi - self.center) / self.sigma
        mass = 0.5 * (math.erf(b / math.sqrt(2)) - math.erf(a / math.sqrt(2)))
        gauss = np.exp(-0.5 * z * z) / (self.sigma * math.sqrt(2 * math.pi) * mass)
        return np.log((1.0 - FLOOR_WEIGHT) * gauss + FLOOR_WEIGHT / (self.hi - self.lo))

    def _propose(self, rng, m):
        out = np.empty(m)
        use_floor = rng.random(m) < FLOOR_WEIGHT
        k = int(use_floor.sum())
        out[use_floor] = rng.uniform(self.lo, self.hi, k)
        todo = np.flatnonzero(~use_floor)
        while len(todo):
            x = self.center + self.sigma * rng.standard_normal(len(todo))
            ok = (x >= self.lo) & (x <= self.hi)
            out[todo[ok]] = x[ok]
            todo = todo[~ok]
        return out

    def _draw_rejection(self, rng, m):
        out = np.empty(m)
        filled = 0
        rounds = 0
        while filled < m:
            need = m - filled
            k = int(need / max(self.acceptance if self.acceptance == self.acceptance else 0.5, 0.05) * 1.2) + 16
            x = self._propose(rng, k)
            lr = self.logf(x) - self._log_proposal(x) - self.log_env
            if np.any(lr > 0.0):
                raise TrackingError(f"rejection envelope violated for j={self.j}")
            acc = x[np.log(rng.random(k)) < lr]
            take = min(len(acc), need)
            out[filled:filled + take] = acc[:take]
            filled += take
            rounds += 1
            if rounds > MAX_REJECT_ROUNDS:
                raise TrackingError(f"no acceptance after {MAX_REJECT_ROUNDS} rounds for j={self.j}")
        return out

    # -- inverse CDF ---------------------------------------------------------
    def _draw_inverse(self, rng, m):
        u = rng.random(m)
        idx = np.searchsorted(self.cdf, u, side="right") - 1
        idx = np.clip(idx, 0, len(self.grid) - 2)
        c0, c1 = self.cdf[idx], self.cdf[idx + 1]
        frac = np.where(c1 > c0, (u - c0) / np.where(c1 > c0, c1 - c0, 1.0), 0.5)
        return self.grid[idx] + frac * (self.grid[idx + 1] - self.grid[idx])

    def draw(self, rng: np.random.Generator, m: int) -> np.ndarray:
        if self.method == "rejection":
            return self._draw_rejection(rng, m)
        return self._draw_inverse(rng, m)


def _inverse_cdf_tables(logf, intervals):
    """Concatenated grid and CDF (cells inherit trapezoid masses; gaps carry none)."""
    grids = []
    for a, b, *_ in intervals:
        g = np.linspace(a, b, GRID_POINTS)
        grids.append(g)
    lv = [logf(g) for g in grids]
    top = max(float(np.max(v[np.isfinite(v)])) for v in lv)
    pts, cum = [], [0.0]
    for g, v in zip(grids, lv):
        d = np.exp(np.where(np.isfinite(v), v - top, -np.inf))
        cell = 0.5 * (d[1:] + d[:-1]) * np.diff(g)
        if pts:
            # zero-mass jump across the gap between windows
            pts.append(g[:1])
            cum.append(cum[-1])
            pts.append(g[1:])
        else:
            pts.append(g)
        cum.extend(cum[-1] + np.cumsum(cell))
    grid = np.concatenate(pts)
    cdf = np.asarray(cum)
    if not cdf[-1] > 0:
        raise QuadratureError("density vanishes on every sampling window")
    return grid, cdf / cdf[-1]


def build_modulus_sampler(
    P: RadialPotential,
    h: Optional[TestFunction],
    pert: Perturbation,
    j: int,
    n: int,
    policy: Optional[CutoffPolicy] = None,
    G: Optional[DropletGeometry] = None,
    domain: Optional[tuple] = None,
) -> ModulusSampler:
    """Sampler for ``R_j`` on the same windows the quadrature of ``h_j`` uses."""
    policy = policy or CutoffPolicy(n)
    plan = plan_windows(P, j, n, policy, G, domain)
    base = _log_integrand(P, h, pert.s, j, n)
    beta = 1.0 + 2.0 * pert.alpha

    def logf(r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return base(r) + beta * np.log(r)

    single = len(plan.intervals) == 1 and len(plan.intervals[0][2]) == 1
    if single:
        a, b, centers, _ = plan.intervals[0]
        c = centers[0]
        lap = float(P.laplacian(c))
        sigma = INFLATE / math.sqrt(n * 4.0 * lap) if lap > 0 else float("nan")
        if sigma == sigma and c - 4.0 * sigma > a and c + 4.0 * sigma < b:
            S = ModulusSampler(j, "rejection", None, a, b, center=c, sigma=sigma)
            grid = np.linspace(a, b, GRID_POINTS)
            lv = logf(grid)
            top = float(np.max(lv))
            S.logf = lambda r, _f=logf, _t=top: _f(r) - _t
            ratio = lv - top - S._log_proposal(grid)
            S.log_env = float(np.max(ratio)) + ENVELOPE_SAFETY
            # acceptance = (int f) / exp(log_env)
            cell = 0.5 * (np.exp(lv[1:] - top) + np.exp(lv[:-1] - top)) * np.diff(grid)
            S.acceptance = float(np.sum(cell)) / math.exp(S.log_env)
            if S.acceptance >= MIN_ACCEPT:
                return S
    grid, cdf = _inverse_cdf_tables(logf, plan.intervals)
    return ModulusSampler(j, "inverse_cdf", logf, float(grid[0]), float(grid[-1]), grid=grid, cdf=cdf)


# ---------------------------------------------------------------------------
# batches


@dataclass
class SampleBatch:
    """Per-sample sums ``sum_j f(R_j)`` for registered statistics (and optionally the moduli)."""

    n: int
    seed: int
    n_samples: int
    sums: Dict[str, np.ndarray] = field(default_factory=dict)
    moduli: Optional[np.ndarray] = None  # shape (n_samples, n)
    methods: Dict[str, int] = field(default_factory=dict)
    acceptance: List[float] = field(default_factory=list)

    def stream_id(self, j: int, block: int) -> tuple:
        return (self.seed, j, block)


def stream_rng(seed: int, j: int, block: int) -> np.random.Generator:
    """Independent generator for the stream keyed by ``(seed, j, block)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(j), int(block)))))


def _draw_column(sampler: ModulusSampler, seed: int, n_samples: int) -> np.ndarray:
    out = np.empty(n_samples)
    for blk, start in enumerate(range(0, n_samples, BLOCK)):
        m = min(BLOCK, n_samples - start)
        rng = stream_rng(seed, sampler.j, blk)
        out[start:start + m] = sampler.draw(rng, m)
    return out


def kostlan_sample(
    P: RadialPotential,
    pert: Perturbation,
    n: int,
    n_samples: int,
    seed: int = 0,
    *,
    h: Optional[TestFunction] = None,
    statistics: Optional[Dict[str, Callable[[np.ndarray], np.ndarray]]] = None,
    keep_moduli: bool = False,
    policy: Optional[CutoffPolicy] = None,
    G: Optional[DropletGeometry] = None,
    domain: Optional[tuple] = None,
    workers: int = 1,
) -> SampleBatch:
    """Draw ``n_samples`` independent configurations of the ``n`` moduli.

    ``h`` and ``pert`` define the tilted ensemble (``e^{s h}`` and the point
    charge); ``statistics`` maps names to vectorised functions whose sums over
    ``j`` are accumulated per sample.  Modulus ``j`` of samples in block ``b``
    (of ``BLOCK`` samples) comes from the stream ``(seed, j, b)``, so results
    are reproducible and independent of ``workers``.
    """
    if n < 1 or n_samples < 1:
        raise DomainError("n and n_samples must be positive")
    policy = policy or CutoffPolicy(max(n, 2))
    statistics = dict(statistics or {})
    batch = SampleBatch(n, int(seed), int(n_samples))
    batch.sums = {k: np.zeros(n_samples) for k in statistics}
    if keep_moduli:
        batch.moduli = np.empty((n_samples, n))

    def work(j):
        S = build_modulus_sampler(P, h, pert, j, n, policy, G, domain)
        try:
            col = _draw_column(S, seed, n_samples)
        except TrackingError:
            S = _fallback(P, h, pert, j, n, policy, G, domain)
            col = _draw_column(S, seed, n_samples)
        return S, col

    def consume(j, S, col):
        batch.methods[S.method] = batch.methods.get(S.method, 0) + 1
        if S.method == "rejection":
            batch.acceptance.append(S.acceptance)
        if np.any(col <= 0.0):
            raise DomainError("a sampled modulus is not positive")
        for name, f in statistics.items():
            batch.sums[name] += f(col)
        if keep_moduli:
            batch.moduli[:, j] = col

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            for j, (S, col) in enumerate(ex.map(work, range(n))):
                consume(j, S, col)
    else:
        for j in range(n):
            S, col = work(j)
            consume(j, S, col)
    return batch


def _fallback(P, h, pert, j, n, policy, G, domain) -> ModulusSampler:
    plan = plan_windows(P, j, n, policy, G, domain)
    base = _log_integrand(P, h, pert.s, j, n)
    beta = 1.0 + 2.0 * pert.alpha

    def logf(r):
        with np.errstate(divide="ignore"):
            return base(r) + beta * np.log(r)

    grid, cdf = _inverse_cdf_tables(logf, plan.intervals)
    return ModulusSampler(j, "inverse_cdf", logf, float(grid[0]), float(grid[-1]), grid=grid, cdf=cdf)


def write_batch(path, batch: SampleBatch) -> None:
    """Binary record: magic, then ``n``, ``seed``, ``n_samples`` (uint64) and the moduli (float64), little-endian."""
    if batch.moduli is None:
        raise DomainError("the batch does not carry moduli")
    with open(path, "wb") as fh:
        fh.write(RECORD_MAGIC)
        fh.write(struct.pack("<QQQ", batch.n, batch.seed, batch.n_samples))
        fh.write(np.ascontiguousarray(batch.moduli, dtype="<f8").tobytes())


def read_batch(path) -> SampleBatch:
    with open(path, "rb") as fh:
        magic = fh.read(len(RECORD_MAGIC))
        if magic != RECORD_MAGIC:
            raise DomainError("not a sample-batch record")
        n, seed, m = struct.unpack("<QQQ", fh.read(24))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != n * m:
        raise DomainError("truncated sample-batch record")
    return SampleBatch(int(n), int(seed), int(m), moduli=data.reshape(m, n).copy())


# ---------------------------------------------------------------------------
# statistics


def _vectorised(h) -> Callable[[np.ndarray], np.ndarray]:
    f = fn._as_test_function(h)
    return lambda r: np.asarray(f.d(r), dtype=float) * np.ones_like(r)


def fluct_statistic(batch: SampleBatch, h, G: DropletGeometry, P: RadialPotential, name: Optional[str] = None) -> np.ndarray:
    """``fluct_n h = sum_j h(R_j) - n int h dsigma`` for every sample.

    Uses the accumulated sum ``name`` when given, otherwise the stored moduli.
    """
    f = fn._as_test_function(h)
    mean = fn.sigma_moment(P, G, f)
    if name is not None:
        total = batch.sums[name]
    elif batch.moduli is not None:
        total = np.sum(np.asarray(f.d(batch.moduli), dtype=float) * np.ones_like(batch.moduli), axis=1)
    else:
        raise DomainError("batch has neither the requested sum nor the moduli")
    return total - batch.n * mean


@dataclass
class EmpiricalCGF:
    s: np.ndarray
    value: np.ndarray
    se: np.ndarray
    top_share: np.ndarray
    ess: np.ndarray


def empirical_cgf(samples: np.ndarray, s_grid: Sequence[float]) -> EmpiricalCGF:
    """``log mean exp(s X)`` with delta-method standard errors.

    Warns when the largest 1% of the weights carry more than 20% of their
    sum; raises :class:`DegenerateError` when the effective sample size of
    the weights drops below 10.
    """
    x = np.asarray(samples, dtype=float)
    N = len(x)
    if N < 2:
        raise DomainError("need at least two samples")
    vals, ses, shares, esss = [], [], [], []
    for s in s_grid:
        if s == 0.0:
            vals.append(0.0)
            ses.append(0.0)
            shares.append(TOP_FRACTION)
            esss.append(float(N))
            continue
        lw = s * x
        top = float(np.max(lw))
        w = np.exp(lw - top)
        mean = float(np.mean(w))
        sd = float(np.std(w, ddof=1))
        ess = float(np.sum(w) ** 2 / np.sum(w * w))
        if ess < MIN_ESS:
            raise DegenerateError(f"effective sample size {ess:.1f} at s={s}")
        k = max(1, int(TOP_FRACTION * N))
        share = float(np.sum(np.partition(w, N - k)[N - k:]) / np.sum(w))
        if share > TOP_SHARE:
            warnings.warn(f"top 1% of weights carry {share:.0%} of the mean at s={s}", RuntimeWarning, stacklevel=2)
        vals.append(top + math.log(mean))
        ses.append(sd / (mean * math.sqrt(N)))
        shares.append(share)
        esss.append(ess)
    return EmpiricalCGF(np.asarray(list(s_grid), float), np.array(vals), np.array(ses), np.array(shares), np.array(esss))


# ---------------------------------------------------------------------------
# outposts


@dataclass
class CountLaw:
    n: int
    cut: float
    counts: np.ndarray  # per-sample N_n
    support: np.ndarray
    empirical: np.ndarray
    exact: np.ndarray
    tv: float
    mean: float
    mean_se: float
    mean_exact: float
    rho: float
    theta: float

    @property
    def mean_z(self) -> float:
        return (self.mean - self.mean_exact) / self.mean_se if self.mean_se > 0 else float("inf")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["schema=1"])
        w.writerow(["k", "empirical_pmf", "heine_pmf"])
        for k, a, b in zip(self.support, self.empirical, self.exact):
            w.writerow([int(k), repr(float(a)), repr(float(b))])
        return buf.getvalue()


def outpost_count_law(
    P: RadialPotential,
    G: DropletGeometry,
    n: int,
    n_samples: int,
    seed: int = 0,
    policy: Optional[CutoffPolicy] = None,
    workers: int = 1,
) -> CountLaw:
    """Law of ``N_n = #{j : R_j > (b + t)/2}`` against ``He(theta rho, rho^2)``."""
    pars = outpost_parameters(P, G, None)
    if pars.case != "outer":
        raise DomainError("the counting law is checked for an outpost outside the droplet")
    cut = pars.cut
    batch = kostlan_sample(
        P, Perturbation(), n, n_samples, seed,
        statistics={"count": lambda r: (r > cut).astype(float)},
        policy=policy, G=G, workers=workers,
    )
    counts = np.rint(batch.sums["count"]).astype(np.int64)
    X = HeineDist(pars.theta * pars.rho, pars.rho**2)
    ks, p = X.support_pmf()
    top = max(int(counts.max()), int(ks[-1]))
    support = np.arange(top + 1)
    emp = np.bincount(counts, minlength=top + 1) / n_samples
    exact = np.zeros(top + 1)
    exact[: len(p)] = p
    tv = 0.5 * float(np.sum(np.abs(emp - exact)))
    mean_exact, _ = heine_moments(X)
    return CountLaw(
        n, cut, counts, support, emp, exact, tv,
        float(counts.mean()), float(counts.std(ddof=1) / math.sqrt(n_samples)), mean_exact,
        pars.rho, pars.theta,
    )


def expected_count_quadrature(P: RadialPotential, G: DropletGeometry, n: int, cut: float,
                              policy: Optional[CutoffPolicy] = None) -> float:
    """``sum_j P(R_j > cut)`` from the localised norms."""
    policy = policy or CutoffPolicy(n)
    pert = Perturbation()
    total = []
    for j in range(n):
        full = norm_hj_quadrature(P, None, pert, j, n, policy, G).log_hj
        try:
            outer = norm_hj_quadrature(P, None, pert, j, n, policy, G, domain=(cut, P.r_max)).log_hj
        except QuadratureError:
            continue
        total.append(math.exp(outer - full))
    return math.fsum(total)


def modulus_expectation(P: RadialPotential, pert: Perturbation, j: int, n: int, f,
                        policy: Optional[CutoffPolicy] = None, G: Optional[DropletGeometry] = None) -> float:
    """``E f(R_j)`` by Gauss–Legendre quadrature on the windows of ``h_j``."""
    policy = policy or CutoffPolicy(n)
    f = fn._as_test_function(f)
    plan = plan_windows(P, j, n, policy, G)
    base = _log_integrand(P, None, pert.s, j, n)
    beta = 1.0 + 2.0 * pert.alpha
    x, w = np.polynomial.legendre.leggauss(40)
    rs, ws = [], []
    for a, b, *_ in plan.intervals:
        edges = np.linspace(a, b, 65)
        mid, half = 0.5 * (edges[1:] + edges[:-1]), 0.5 * np.diff(edges)
        rs.append((mid[:, None] + half[:, None] * x).ravel())
        ws.append((half[:, None] * w).ravel())
    r, wt = np.concatenate(rs), np.concatenate(ws)
    with np.errstate(divide="ignore"):
        lv = base(r) + beta * np.log(r)
    d = np.exp(lv - np.max(lv)) * wt
    return float(np.sum(d * np.asarray(f.d(r), dtype=float)) / np.sum(d))


# ---------------------------------------------------------------------------
# CGF comparison


@dataclass
class CGFRow:
    s: float
    F_hat: float
    se: float
    F_pred: float
    z: float
    band: float
    passed: bool


@dataclass
class CGFReport:
    n: int
    mode: str
    rows: List[CGFRow]
    band_coefficient: float
    band_order: str

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def max_abs_z(self) -> float:
        return max(abs(r.z) for r in self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["schema=1"])
        w.writerow(["n", "mode", "s", "F_hat", "se", "F_pred", "z", "band", "pass"])
        for r in self.rows:
            w.writerow([self.n, self.mode, r.s, repr(r.F_hat), repr(r.se), repr(r.F_pred), f"{r.z:.4f}",
                        repr(r.band), int(r.passed)])
        return buf.getvalue()


def band_scale(n: int, order: str) -> float:
    if order == "1/n":
        return 1.0 / n
    if order == "log(n)^3/n^(1/12)":
        return math.log(n) ** 3 / n ** (1.0 / 12.0)
    raise DomainError(f"unknown band order {order!r}")


def prediction_terms(P: RadialPotential, G: DropletGeometry, h, pert: Perturbation, n: int, mode: str):
    """Everything :func:`heine.predicted_fluct_cgf` needs for a given mode, as a callable of ``s``."""
    f = fn._as_test_function(h) if h is not None else None
    if mode == "regular":
        if pert.alpha != 0:
            raise DomainError("regular mode needs alpha = 0")
        e = fn.boundary_expectation(P, G, f, "e")
        v = fn.variance_v(P, G, f, "v")
        gaps = fn.gap_constants(P, G, f, Perturbation(0.0, 0.0), n, allow_empty=True)
        return lambda s: predicted_fluct_cgf(gaps, e, v, s, "regular")
    if mode == "conical":
        e = fn.boundary_expectation(P, G, f, "e_h_alpha", alpha=pert.alpha)
        v = fn.variance_v(P, G, f, "v")
        gaps = fn.gap_constants(P, G, f, Perturbation(0.0, pert.alpha), n, allow_empty=True)
        return lambda s: predicted_fluct_cgf(gaps, e, v, s, "conical")
    if mode == "outpost":
        e = fn.boundary_expectation(P, G, f, "e")
        v = fn.variance_v(P, G, f, "v")
        pars = outpost_parameters(P, G, f)
        return lambda s: predicted_fluct_cgf(None, e, v, s, "outpost", outpost=pars)
    if mode == "log_statistic":
        e = fn.boundary_expectation(P, G, None, "e_tilde_ell")
        v = fn.variance_v(P, G, None, "v_tilde_ell")

        def pred(alpha):
            ga = fn.gap_constants(P, G, None, Perturbation(0.0, alpha), n, allow_empty=True)
            g0 = fn.gap_constants(P, G, None, Perturbation(0.0, 0.0), n, allow_empty=True)
            return predicted_fluct_cgf(ga, e, v, alpha, "log_statistic", n=n, gaps_zero=g0)

        return pred
    raise DomainError(f"unknown mode {mode!r}")


def exact_cgf(P: RadialPotential, G: DropletGeometry, h, pert: Perturbation, n: int, s: float,
              policy: Optional[CutoffPolicy] = None) -> float:
    """The finite-n CGF ``log Z_{n, s h} - log Z_{n, 0}`` from the exact norms.

    For the log statistic (``h`` the log-modulus) the tilt ``e^{s fluct}``
    is the point charge ``alpha = s``.
    """
    f = fn._as_test_function(h)
    mean = fn.sigma_moment(P, G, f)
    if f.name == "ell":
        a = Perturbation(0.0, pert.alpha + s)
        lz1, _ = log_partition_exact(P, None, a, n, policy, G)
    else:
        lz1, _ = log_partition_exact(P, f, Perturbation(s, pert.alpha), n, policy, G)
    lz0, _ = log_partition_exact(P, None, Perturbation(0.0, pert.alpha), n, policy, G)
    return lz1 - lz0 - s * n * mean


def cgf_comparison(
    P: RadialPotential,
    G: DropletGeometry,
    h,
    pert: Perturbation,
    n: int,
    mode: str,
    s_grid: Sequence[float],
    n_samples: int,
    seed: int = 0,
    *,
    band_coefficient: Optional[float] = None,
    band_n: Optional[int] = None,
    batch: Optional[SampleBatch] = None,
    workers: int = 1,
) -> CGFReport:
    """Empirical CGF of ``fluct_n h`` against the predicted one.

    A row passes when ``|F_hat - F_pred| <= 3 SE + band``.  The band is
    ``a / n`` for annular droplets and ``a log(n)^3 / n^(1/12)`` with a
    central disk.  Unless ``band_coefficient`` is given, ``a`` is fitted
    from the exact finite-n CGF (quadrature) at ``band_n`` (default ``n``)
    as the largest ``|F_exact - F_pred|`` over the grid.
    """
    f = fn._as_test_function(h)
    order = "1/n" if G.euler_char == 0 else "log(n)^3/n^(1/12)"
    pred = prediction_terms(P, G, f, pert, n, mode)
    if band_coefficient is None:
        nb = band_n or n
        pred_b = pred if nb == n else prediction_terms(P, G, f, pert, nb, mode)
        dev = [abs(exact_cgf(P, G, f, pert, nb, s) - pred_b(s)) for s in s_grid if s != 0]
        band_coefficient = (max(dev) if dev else 0.0) / band_scale(nb, order)
    band = band_coefficient * band_scale(n, order)

    if batch is None:
        sample_pert = Perturbation(0.0, pert.alpha)
        batch = kostlan_sample(P, sample_pert, n, n_samples, seed, statistics={"h": _vectorised(f)}, G=G,
                               workers=workers)
    X = fluct_statistic(batch, f, G, P, name="h" if "h" in batch.sums else None)
    emp = empirical_cgf(X, s_grid)
    rows = []
    for s, Fh, se in zip(emp.s, emp.value, emp.se):
        Fp = 0.0 if s == 0 else pred(float(s))
        z = (Fh - Fp) / se if se > 0 else 0.0
        ok = abs(Fh - Fp) <= 3.0 * se + band
        rows.append(CGFRow(float(s), float(Fh), float(se), float(Fp), float(z), float(band), bool(ok)))
    return CGFReport(n, mode, rows, float(band_coefficient), order)
