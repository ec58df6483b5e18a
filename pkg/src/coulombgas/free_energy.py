"""Exact log-partition functions and their large-n expansions.

For a radial potential the partition function factorises as

    Z_n = n! * prod_{j=0}^{n-1} h_j,
    h_j = 2 int_0^inf r^{1+2 alpha} e^{s h(r)} e^{-n g_{j/n}(r)} dr,

so ``log Z_n`` is computed exactly (up to quadrature error) from ``n``
one-dimensional integrals, each localised around the relevant peaks of
``g_{j/n}``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import droplet as dl
from .droplet import CutoffPolicy, DropletGeometry
from .errors import DomainError, GeometryError, MultiPeakError, QuadratureError, SingularError
from .potential import Perturbation, RadialPotential, TestFunction, peak_derivatives
from .quadrature import log_coarse_integral, log_integral, logsumexp_signed, panel_edges

LOG_2PI = math.log(2.0 * math.pi)
TAIL_RATIO = 1e-10
WINDOW_SIGMAS = 12.0


# ---------------------------------------------------------------------------
# norm tables


@dataclass
class NormEntry:
    j: int
    log_hj: float
    method: str
    peaks: tuple
    err: float


@dataclass
class NormTable:
    n: int
    entries: List[NormEntry]

    @property
    def log_h(self) -> np.ndarray:
        return np.array([e.log_hj for e in self.entries])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["schema=1"])
        w.writerow(["j", "log_hj", "method", "err"])
        for e in self.entries:
            w.writerow([e.j, repr(e.log_hj), e.method, f"{e.err:.3e}"])
        return buf.getvalue()


def _log_integrand(P: RadialPotential, h: Optional[TestFunction], s: float, j: int, n: int):
    """``log 2 + s h(r) + 2 j log r - n q(r)`` (the ``r^{1+2 alpha}`` weight is separate)."""

    def f(r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            out = math.log(2.0) - n * P.d(np.minimum(r, P.r_max)) + (2.0 * j * np.log(r) if j else 0.0)
        if s != 0 and h is not None:
            out = out + s * np.asarray(h.d(r))
        return out

    return f


def _window_peaks(P, G, j, n, policy):
    tau = j / n
    ps = dl.local_peaks(P, tau)
    chosen = set(float(r) for r in dl.significant_peaks(P, ps, policy))
    if G is not None:
        for nu, (m, _x) in enumerate(dl.critical_indices(G, n)):
            if abs(j - m) <= policy.L_n:
                for k in (nu, nu + 1):
                    rb = dl.branch_peak(P, G, k, tau)
                    if rb is not None:
                        chosen.add(float(rb))
    return sorted(chosen)


@dataclass
class WindowPlan:
    """Integration windows for one norm: merged intervals with their anchors."""

    intervals: List[tuple]  # (lo, hi, centers, widths)
    domain: tuple
    anchors: tuple


def plan_windows(
    P: RadialPotential,
    j: int,
    n: int,
    policy: CutoffPolicy,
    G: Optional[DropletGeometry] = None,
    domain: Optional[tuple] = None,
) -> WindowPlan:
    """Windows of half-width ``max(eps_n, 12 / sqrt(n d2))`` around the peaks that matter for ``h_j``.

    Without a domain restriction these are the significant peaks of
    ``g_{j/n}`` plus, near a critical index, both branch peaks.  With a
    domain ``(lo, hi)`` the significance test is made relative to the
    smallest value of ``g`` inside the domain, and a domain edge becomes an
    anchor when the minimum sits there.
    """
    tau = j / n
    ps = dl.local_peaks(P, tau)
    anchors: List[tuple] = []  # (center, width)
    if domain is None:
        lo_dom, hi_dom = 0.0, P.r_max
        for c in _window_peaks(P, G, j, n, policy):
            anchors.append((c, 1.0 / math.sqrt(n * 4.0 * float(P.laplacian(c)))))
    else:
        lo_dom, hi_dom = domain
        cand = [(float(r), float(v)) for r, v in zip(ps.local_peaks, ps.values) if lo_dom <= r <= hi_dom]
        edges = []
        for e in (lo_dom, hi_dom):
            if 0.0 < e < P.r_max:
                edges.append((e, float(P.g(tau, e))))
        vals = [v for _, v in cand] + [v for _, v in edges]
        if not vals:
            raise GeometryError("empty integration domain")
        B = min(vals)
        for c, v in cand:
            if v < B + policy.delta_n:
                anchors.append((c, 1.0 / math.sqrt(n * 4.0 * float(P.laplacian(c)))))
        for e, v in edges:
            if v < B + policy.delta_n:
                slope = abs(float(P.g(tau, e, 1)))
                anchors.append((e, 1.0 / (n * max(slope, 1.0 / math.sqrt(n)))))
    if not anchors:
        raise GeometryError(f"no integration anchor for j={j}")
    raw = []
    for c, w in anchors:
        if c in (lo_dom, hi_dom):
            hw = policy.eps_n
        else:
            lap = float(P.laplacian(c))
            if lap <= 0:
                raise SingularError("Delta Q is not positive at a peak")
            hw = max(policy.eps_n, WINDOW_SIGMAS / math.sqrt(n * 4.0 * lap))
        raw.append([max(lo_dom, c - hw), min(hi_dom, c + hw)])
    order = np.argsort([r[0] for r in raw])
    merged: List[list] = []
    for i in order:
        a, b = raw[i]
        if merged and a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    intervals = []
    for a, b in merged:
        inside = [(c, w) for c, w in anchors if a <= c <= b]
        intervals.append((a, b, [c for c, _ in inside], [w for _, w in inside]))
    return WindowPlan(intervals, (lo_dom, hi_dom), tuple(c for c, _ in anchors))


def norm_hj_quadrature(
    P: RadialPotential,
    h: Optional[TestFunction],
    pert: Perturbation,
    j: int,
    n: int,
    policy: Optional[CutoffPolicy] = None,
    G: Optional[DropletGeometry] = None,
    domain: Optional[tuple] = None,
    rel_tol: float = 1e-13,
) -> NormEntry:
    """``log h_j`` by peak-localised panel quadrature.

    ``domain = (lo, hi)`` restricts the integral (used for localised
    partition functions); the default is the working interval.
    """
    if not 0 <= j < n:
        raise DomainError(f"index j={j} outside [0, {n})")
    policy = policy or CutoffPolicy(n)
    if abs(pert.s) > max(math.log(n), 1.0) + 1e-12:
        warnings.warn("|s| exceeds log n; expansions are not uniform there", RuntimeWarning, stacklevel=2)
    beta = 1.0 + 2.0 * pert.alpha
    logf = _log_integrand(P, h, pert.s, j, n)
    plan = plan_windows(P, j, n, policy, G, domain)

    logs, errs = [], []
    for a, b, centers, widths in plan.intervals:
        edges = panel_edges(a, b, centers, widths)
        noise = n * float(np.max(np.abs(P.d(edges)))) + 2.0 * j * float(
            np.max(np.abs(np.log(np.maximum(edges, 1e-300))))
        )
        res = log_integral(logf, edges, beta=beta, rel_tol=rel_tol, noise_scale=min(noise, 1e6))
        logs.append(res.value)
        errs.append(res.rel_err)
    log_window = logsumexp_signed(np.array(logs))

    # tail diagnostic over the complement of the windows inside the domain
    lo_dom, hi_dom = plan.domain
    gaps, prev = [], lo_dom
    for a, b, _, _ in plan.intervals:
        if a > prev:
            gaps.append((prev, a))
        prev = b
    if prev < hi_dom:
        gaps.append((prev, hi_dom))
    tails = [log_coarse_integral(logf, a, b, beta=beta) for a, b in gaps]
    if tails:
        log_tail = logsumexp_signed(np.array(tails))
        if log_tail - log_window > math.log(TAIL_RATIO):
            raise QuadratureError(
                f"mass outside the quadrature windows for j={j}, n={n}: ratio {math.exp(log_tail - log_window):.2e}"
            )
    return NormEntry(j, float(log_window), "quadrature", plan.anchors, float(max(errs)))


def norm_hj_laplace(
    P: RadialPotential,
    h: Optional[TestFunction],
    pert: Perturbation,
    j: int,
    n: int,
    policy: Optional[CutoffPolicy] = None,
) -> NormEntry:
    """Laplace approximation with the first correction: ``sqrt(2 pi/(n d2)) f e^{-n g} (1 + a/n)``."""
    if not 0 < j < n:
        raise DomainError("the Laplace form needs a peak away from the origin (0 < j < n)")
    policy = policy or CutoffPolicy(n)
    tau = j / n
    ps = dl.local_peaks(P, tau)
    sig = dl.significant_peaks(P, ps, policy)
    if len(sig) != 1:
        raise MultiPeakError(f"{len(sig)} significant peaks at j={j}; use quadrature")
    r = float(sig[0])
    a = laplace_correction(P, h, pert, r)
    d2 = 4.0 * float(P.laplacian(r))
    logf = math.log(2.0) + (1.0 + 2.0 * pert.alpha) * math.log(r)
    if pert.s and h is not None:
        logf += pert.s * float(h.d(r))
    val = 0.5 * math.log(2.0 * math.pi / (n * d2)) + logf - n * float(P.g(tau, r)) + math.log1p(a / n)
    return NormEntry(j, val, "laplace", (r,), float("nan"))


def laplace_correction(P: RadialPotential, h: Optional[TestFunction], pert: Perturbation, r: float) -> float:
    """The ``a`` in ``(1 + a/n)`` for ``f(r) = 2 r^{1+2 alpha} e^{s h(r)}`` at a peak ``r``."""
    d2, d3, d4 = peak_derivatives(P, r)
    beta = 1.0 + 2.0 * pert.alpha
    f1 = beta / r
    f1p = -beta / r**2
    if pert.s and h is not None:
        f1 += pert.s * float(h.d(r, 1))
        f1p += pert.s * float(h.d(r, 2))
    f2 = f1p + f1 * f1
    return -d4 / (8 * d2**2) + 5 * d3**2 / (24 * d2**3) + 0.5 * f2 / d2 - 0.5 * f1 * d3 / d2**2


def norm_table(
    P: RadialPotential,
    h: Optional[TestFunction],
    pert: Perturbation,
    n: int,
    policy: Optional[CutoffPolicy] = None,
    G: Optional[DropletGeometry] = None,
    domain: Optional[tuple] = None,
    method: str = "quadrature",
    spot_check_every: int = 50,
) -> NormTable:
    policy = policy or CutoffPolicy(n)
    entries = []
    for j in range(n):
        if method == "laplace":
            try:
                e = norm_hj_laplace(P, h, pert, j, n, policy)
                if j % spot_check_every == 0:
                    q = norm_hj_quadrature(P, h, pert, j, n, policy, G, domain)
                    e.err = abs(e.log_hj - q.log_hj)
                entries.append(e)
                continue
            except (MultiPeakError, DomainError):
                pass
        entries.append(norm_hj_quadrature(P, h, pert, j, n, policy, G, domain))
    return NormTable(n, entries)


def log_factorial(n: int) -> float:
    return math.lgamma(n + 1.0)


def log_partition_exact(
    P: RadialPotential,
    h: Optional[TestFunction],
    pert: Perturbation,
    n: int,
    policy: Optional[CutoffPolicy] = None,
    G: Optional[DropletGeometry] = None,
    domain: Optional[tuple] = None,
    method: str = "quadrature",
) -> tuple[float, NormTable]:
    """``log Z_n = log n! + sum_j log h_j`` (exactly rounded summation)."""
    if n < 2:
        raise DomainError("n must be at least 2")
    table = norm_table(P, h, pert, n, policy, G, domain, method)
    total = math.fsum([log_factorial(n)] + [e.log_hj for e in table.entries])
    return total, table


# ---------------------------------------------------------------------------
# expansions


@dataclass
class ExpansionBreakdown:
    """Terms of a large-n expansion of ``log Z_n``; ``total`` adds them in field order."""

    kind: str  # "regular" or "conical"
    n: int
    C1: float  # -n^2 I_Q
    C2: float  # (1/2) n log n
    C3: float  # n [log(2 pi)/2 - 1 - E_Q/2 + int k dsigma]
    C4: float  # coefficient * log n
    C5: float  # constant block (without the displacement term)
    Gn: float  # displacement term
    error_order: str
    details: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        acc = 0.0
        for v in (self.C1, self.C2, self.C3, self.C4, self.C5, self.Gn):
            acc += v
        return acc

    @property
    def total_without_Gn(self) -> float:
        return self.C1 + self.C2 + self.C3 + self.C4 + self.C5

    def terms(self) -> dict:
        return {"C1": self.C1, "C2": self.C2, "C3": self.C3, "C4": self.C4, "C5": self.C5, "Gn": self.Gn}

    def to_json(self) -> str:
        d = asdict(self)
        d["total"] = self.total
        return json.dumps(d, indent=2)


def _gn(P, G, h, pert, n):
    from .functionals import gap_constants
    from .qspecial import displacement_Gn

    gaps = gap_constants(P, G, h, pert, n, allow_empty=True)
    return displacement_Gn(gaps.rho, gaps.mu, gaps.x), gaps


def expansion_regular(P: RadialPotential, G: DropletGeometry, h: Optional[TestFunction], pert: Perturbation, n: int) -> ExpansionBreakdown:
    """Expansion of ``log Z_{n,sh}`` for a droplet without outposts and no point charge."""
    from . import functionals as fn
    from .qspecial import CONSTANTS

    if G.outposts:
        raise GeometryError("the droplet has outposts; use the outpost pipeline")
    if pert.alpha != 0:
        raise DomainError("the regular expansion requires alpha = 0")
    s = pert.s
    hh = h if h is not None else 0.0
    I = fn.energy_IQ(P, G)
    E = fn.entropy_EQ(P, G)
    F, _ = fn.fq_total(P, G)
    chi = G.euler_char
    sig_h = fn.sigma_moment(P, G, hh) if s else 0.0
    e_h = fn.boundary_expectation(P, G, hh, "e") if s else 0.0
    v_h = fn.variance_v(P, G, hh, "v") if s else 0.0
    Gn, gaps = _gn(P, G, h, pert, n)
    C5 = chi * CONSTANTS.zeta_prime_minus1 + F + 0.5 * LOG_2PI + s * e_h + 0.5 * s * s * v_h
    return ExpansionBreakdown(
        kind="regular",
        n=n,
        C1=-n * n * I,
        C2=0.5 * n * math.log(n),
        C3=n * (0.5 * LOG_2PI - 1.0 - 0.5 * E + s * sig_h),
        C4=(6 - chi) / 12.0 * math.log(n),
        C5=C5,
        Gn=Gn,
        error_order="(1+s^2)/n" if chi == 0 else "log(n)^3/n^(1/12)",
        details={"I_Q": I, "E_Q": E, "F_Q": F, "chi": chi, "sigma_h": sig_h, "e_h": e_h, "v_h": v_h,
                 "x": gaps.x, "mu": gaps.mu, "rho": gaps.rho},
    )


def expansion_conical(P: RadialPotential, G: DropletGeometry, h: Optional[TestFunction], pert: Perturbation, n: int) -> ExpansionBreakdown:
    """Expansion of ``log Z_{n,sh}^{(alpha)}`` for a central-disk droplet with a point charge."""
    from . import functionals as fn
    from .potential import log_modulus
    from .qspecial import CONSTANTS, log_barnes_g

    if G.euler_char != 1:
        raise GeometryError("the conical expansion requires a central disk droplet")
    if G.outposts:
        raise GeometryError("the droplet has outposts; use the outpost pipeline")
    s, al = pert.s, pert.alpha
    hh = h if h is not None else 0.0
    ell = log_modulus()
    I = fn.energy_IQ(P, G)
    E = fn.entropy_EQ(P, G)
    F, _ = fn.fq_total(P, G)
    sig_h = fn.sigma_moment(P, G, hh) if s else 0.0
    sig_l = fn.sigma_moment(P, G, ell) if al else 0.0
    e_h = fn.boundary_expectation(P, G, hh, "e") if s else 0.0
    e_l = math.fsum(fn.e_ell_component(P, G, k) for k in range(len(G.components))) if al else 0.0
    v0h = fn.variance_v(P, G, hh, "v_nu", nu=0) if s else 0.0
    v_outer = []
    for k in range(1, len(G.components)):
        a, b = G.components[k]
        fk_h = fn._as_test_function(hh)
        v_outer.append(0.5 * fn._quad(lambda r: r * (s * float(fk_h.d(r, 1)) + 2.0 * al / r) ** 2, a, b))
    b0 = G.b[0]
    Gn, gaps = _gn(P, G, h, pert, n)
    h_b0 = float(fn._as_test_function(hh).d(b0)) if s else 0.0
    h_0 = float(fn._as_test_function(hh).d(0.0)) if s else 0.0
    logG = log_barnes_g(1.0 + al)
    if logG > 20:
        warnings.warn("-log G(1+alpha) dominates the constant term (alpha close to -1)", RuntimeWarning, stacklevel=2)
    C5 = math.fsum([
        CONSTANTS.zeta_prime_minus1,
        -logG,
        F,
        0.5 * (1.0 + al) * LOG_2PI,
        s * e_h + al * e_l,
        -0.5 * al,
        0.5 * s * s * v0h,
        0.5 * math.fsum(v_outer),
        0.5 * al * al * math.log(b0 * b0 * float(P.laplacian(0.0))),
        al * s * (h_b0 - h_0),
    ])
    return ExpansionBreakdown(
        kind="conical",
        n=n,
        C1=-n * n * I,
        C2=0.5 * n * math.log(n),
        C3=n * (0.5 * LOG_2PI - 1.0 - 0.5 * E + s * sig_h + al * sig_l),
        C4=(5.0 / 12.0 + 0.5 * al * al) * math.log(n),
        C5=C5,
        Gn=Gn,
        error_order="log(n)^3/n^(1/12)",
        details={"I_Q": I, "E_Q": E, "F_Q": F, "e_h": e_h, "e_ell": e_l, "v0h": v0h, "log_G": logG,
                 "x": gaps.x, "mu": gaps.mu, "rho": gaps.rho},
    )


# ---------------------------------------------------------------------------
# outposts


@dataclass
class OutpostParameters:
    t: float
    case: str  # "outer", "inner" or "origin"
    rho: float
    theta: float
    c: float
    cut: float

    def mu(self, s: float) -> float:
        return self.theta * math.exp(self.c * s)


def outpost_parameters(P: RadialPotential, G: DropletGeometry, h: Optional[TestFunction]) -> OutpostParameters:
    if len(G.outposts) != 1:
        raise GeometryError(f"exactly one outpost is supported (found {len(G.outposts)})")
    if len(G.components) != 1:
        raise GeometryError("outposts are supported for single-component droplets only")
    a, b = G.components[0]
    t = G.outposts[0]
    hv = (lambda r: float(h.d(r))) if h is not None else (lambda r: 0.0)
    if t > b:
        rho = b / t
        theta = math.sqrt(float(P.laplacian(b)) / float(P.laplacian(t)))
        return OutpostParameters(t, "outer", rho, theta, hv(t) - hv(b), 0.5 * (b + t))
    if t == 0.0:
        return OutpostParameters(0.0, "origin", 0.0, 0.0, 0.0, 0.5 * a)
    rho = t / a
    theta = math.sqrt(float(P.laplacian(t)) / float(P.laplacian(a)))
    return OutpostParameters(t, "inner", rho, theta, hv(a) - hv(t), 0.5 * (a + t))


@dataclass
class OutpostRatio:
    n: int
    s: float
    predicted: float
    measured: float
    log_Z: float
    log_Z_localized: float
    params: OutpostParameters

    @property
    def difference(self) -> float:
        return self.measured - self.predicted


def outpost_log_ratio(
    P: RadialPotential,
    G: DropletGeometry,
    h: Optional[TestFunction],
    s: float,
    n: int,
    policy: Optional[CutoffPolicy] = None,
) -> OutpostRatio:
    """Predicted ``log(-mu(s) rho; rho^2)_inf`` against the measured ``log Z - log Z_localised``.

    The localised partition function confines the particles to the side of
    the midpoint between droplet and outpost that contains the droplet.  The
    measured ratio is accumulated as ``sum_j log1p(h_j^far / h_j^near)`` so
    that no cancellation between the two ``O(n^2)`` log-partition functions
    occurs.
    """
    from .qspecial import qpoch_infinite_log

    policy = policy or CutoffPolicy(n)
    op = outpost_parameters(P, G, h)
    pert = Perturbation(s, 0.0)
    pred = 0.0 if op.case == "origin" else qpoch_infinite_log(-op.mu(s) * op.rho, op.rho**2)
    if op.case == "outer":
        near_dom, far_dom = (0.0, op.cut), (op.cut, P.r_max)
    else:
        near_dom, far_dom = (op.cut, P.r_max), (0.0, op.cut)
    terms, near_logs = [], []
    for j in range(n):
        near = norm_hj_quadrature(P, h, pert, j, n, policy, None, near_dom).log_hj
        far = norm_hj_quadrature(P, h, pert, j, n, policy, None, far_dom).log_hj
        near_logs.append(near)
        terms.append(math.log1p(math.exp(far - near)) if far - near < 700 else far - near)
    measured = math.fsum(terms)
    log_loc = math.fsum([log_factorial(n)] + near_logs)
    return OutpostRatio(n, s, pred, measured, log_loc + measured, log_loc, op)


# ---------------------------------------------------------------------------
# comparison tables


@dataclass
class CompareRow:
    n: int
    log_Z_exact: float
    expansion_total: float
    residual: float
    scaled_residual: float
    residual_without_Gn: float


def scaled(residual: float, n: int, order: str) -> float:
    if order.startswith("log"):
        return residual * n ** (1.0 / 12.0) / math.log(n) ** 3
    return residual * n


def compare_report(exact: Sequence[float], breakdowns: Sequence[ExpansionBreakdown], n_list: Sequence[int]) -> List[CompareRow]:
    rows = []
    for lz, bd, n in zip(exact, breakdowns, n_list):
        res = lz - bd.total
        rows.append(CompareRow(n, lz, bd.total, res, scaled(res, n, bd.error_order), lz - bd.total_without_Gn))
    return rows


def trend_flags(rows: Sequence[CompareRow]) -> dict:
    """Monotone-trend flags of ``|scaled residual|`` along increasing ``n``."""
    vals = [abs(r.scaled_residual) for r in sorted(rows, key=lambda r: r.n)]
    inc = all(b >= a for a, b in zip(vals, vals[1:])) and len(vals) > 1
    dec = all(b <= a for a, b in zip(vals, vals[1:])) and len(vals) > 1
    return {"increasing": inc, "decreasing": dec}


def compare_csv(rows: Sequence[CompareRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["schema=1"])
    w.writerow(["n", "log_Z_exact", "expansion_total", "residual", "scaled_residual", "residual_without_Gn"])
    for r in rows:
        w.writerow([r.n, repr(r.log_Z_exact), repr(r.expansion_total), repr(r.residual), repr(r.scaled_residual),
                    repr(r.residual_without_Gn)])
    return buf.getvalue()
