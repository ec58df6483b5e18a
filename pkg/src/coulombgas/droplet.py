"""Peak sets, droplet geometry and the n-dependent cutoff policy.

A *local peak* at mass level ``tau`` is a strict local minimum of
``g_tau(r) = q(r) - 2 tau log r``; equivalently an upward crossing of the mass
function ``T(r) = r q'(r) / 2`` through ``tau`` (``T' = 2 r Delta Q``).

On every maximal interval where ``T`` increases there is at most one peak,
so peaks are labelled by these *segments*.  Sweeping ``tau`` over ``[0, 1]``
and following the segment that carries the global minimum (the *global
peak*) yields the droplet: its components are the ranges swept by the global
peak, and the levels where it jumps to another segment are the cumulative
masses ``M_nu``.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import DegenerateError, EmptyPeakError, GeometryError, ResolutionError, TrackingError
from .potential import RadialPotential

log = logging.getLogger(__name__)

TIE_TOL = 1e-9
ROOT_TOL = 1e-12
SWEEP_POINTS = 4096
MIN_WIDTH = 1e-8


# ---------------------------------------------------------------------------
# cutoff policy


@dataclass(frozen=True)
class CutoffPolicy:
    """Cutoffs ``delta_n = C log n / n``, ``eps_n = sqrt(delta_n)``,
    ``L_n = C log n`` and ``D_n = ceil(n^(1/6))``."""

    n: int
    C_cut: float = 20.0

    def __post_init__(self):
        if self.n < 2 or self.C_cut <= 0:
            raise ValueError("cutoff policy needs n >= 2 and C_cut > 0")

    @property
    def delta_n(self) -> float:
        return self.C_cut * math.log(self.n) / self.n

    @property
    def eps_n(self) -> float:
        return math.sqrt(self.delta_n)

    @property
    def L_n(self) -> float:
        return self.C_cut * math.log(self.n)

    @property
    def D_n(self) -> int:
        return math.ceil(self.n ** (1.0 / 6.0) - 1e-12)


# ---------------------------------------------------------------------------
# mass-function segments


@dataclass(frozen=True)
class Segment:
    """Maximal radial interval on which ``T`` increases (``Delta Q > 0``)."""

    lo: float
    hi: float
    T_lo: float
    T_hi: float

    def contains_level(self, tau: float) -> bool:
        return self.T_lo <= tau <= self.T_hi


_SEGMENT_CACHE: dict = {}


def mass_segments(P: RadialPotential) -> List[Segment]:
    """Increasing segments of ``T`` on the working interval (cached per potential)."""
    key = id(P)
    hit = _SEGMENT_CACHE.get(key)
    if hit is not None and hit[0] is P:
        return hit[1]
    grid = np.unique(np.concatenate([np.linspace(0.0, P.r_max, 24001), np.geomspace(1e-8, 1e-2, 400)]))
    T = P.mass(grid)
    lap = P.laplacian(grid)
    inc = lap > 0
    segs: List[Segment] = []
    i = 0
    m = len(grid)
    while i < m:
        if not inc[i]:
            i += 1
            continue
        j = i
        while j + 1 < m and inc[j + 1]:
            j += 1
        lo = grid[i] if i == 0 else _refine_sign_change(P, grid[i - 1], grid[i])
        hi = grid[j] if j == m - 1 else _refine_sign_change(P, grid[j], grid[j + 1])
        if hi - lo > 1e-12:
            segs.append(Segment(float(lo), float(hi), float(P.mass(lo)), float(P.mass(hi))))
        i = j + 1
    _SEGMENT_CACHE[key] = (P, segs)
    return segs


def _refine_sign_change(P, x0, x1):
    f = lambda x: float(P.laplacian(x))
    f0, f1 = f(x0), f(x1)
    if f0 == 0:
        return x0
    if f1 == 0 or f0 * f1 > 0:
        return x1
    return brentq(f, x0, x1, xtol=1e-15, rtol=1e-15)


def _solve_level(P: RadialPotential, seg: Segment, tau: float, seed: Optional[float] = None) -> float:
    """Root of ``T(r) = tau`` inside an increasing segment (safeguarded Newton)."""
    if tau <= seg.T_lo:
        return seg.lo
    if tau >= seg.T_hi:
        return seg.hi
    lo, hi = seg.lo, seg.hi
    x = seed if seed is not None and lo < seed < hi else 0.5 * (lo + hi)
    if seed is None and seg.lo == 0.0:
        lap0 = float(P.laplacian(0.0))
        if lap0 > 0:
            x = min(math.sqrt(tau / lap0), 0.5 * (lo + hi))
    for _ in range(100):
        Tx = float(P.mass(x)) - tau
        if abs(Tx) <= ROOT_TOL * max(1.0, abs(tau)):
            return x
        if Tx > 0:
            hi = x
        else:
            lo = x
        dT = 2.0 * x * float(P.laplacian(x))
        nx = x - Tx / dT if dT > 0 else 0.5 * (lo + hi)
        if not lo < nx < hi:
            nx = 0.5 * (lo + hi)
        if abs(nx - x) <= 1e-16 * max(1.0, x):
            return nx
        x = nx
    return x


def _solve_levels(P: RadialPotential, seg: Segment, taus: np.ndarray) -> np.ndarray:
    """Vectorised :func:`_solve_level` for levels inside the segment's range."""
    taus = np.asarray(taus, dtype=float)
    lo = np.full_like(taus, seg.lo)
    hi = np.full_like(taus, seg.hi)
    x = 0.5 * (lo + hi)
    if seg.lo == 0.0:
        lap0 = float(P.laplacian(0.0))
        if lap0 > 0:
            x = np.minimum(np.sqrt(np.maximum(taus, 0) / lap0), x)
    for _ in range(100):
        Tx = P.mass(x) - taus
        done = np.abs(Tx) <= ROOT_TOL * np.maximum(1.0, np.abs(taus))
        if done.all():
            break
        hi = np.where(Tx > 0, x, hi)
        lo = np.where(Tx <= 0, x, lo)
        dT = 2.0 * x * P.laplacian(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            nx = np.where(dT > 0, x - Tx / dT, 0.5 * (lo + hi))
        bad = ~((nx > lo) & (nx < hi))
        nx = np.where(bad, 0.5 * (lo + hi), nx)
        x = np.where(done, x, nx)
    x = np.where(taus <= seg.T_lo, seg.lo, x)
    return np.where(taus >= seg.T_hi, seg.hi, x)


# ---------------------------------------------------------------------------
# peak sets


@dataclass
class PeakSet:
    tau: float
    local_peaks: np.ndarray
    values: np.ndarray
    segment_ids: np.ndarray
    B_tau: float
    beta_tau: float
    global_peaks: np.ndarray

    def V(self, r):
        """Obstacle value ``2 tau log r + B_tau`` along the circle family."""
        return 2.0 * self.tau * np.log(r) + self.B_tau


def local_peaks(P: RadialPotential, tau: float, tie_tol: float = TIE_TOL) -> PeakSet:
    if not 0.0 <= tau <= 1.0 + 1e-12:
        raise ValueError("tau must lie in [0, 1]")
    radii, seg_ids = [], []
    for k, seg in enumerate(mass_segments(P)):
        if seg.T_lo <= tau <= seg.T_hi:
            if tau == seg.T_lo and seg.lo > 0:
                continue  # tangential start, Delta Q = 0 there
            r = _solve_level(P, seg, tau)
            if r == 0.0 and tau > 0:
                continue
            radii.append(r)
            seg_ids.append(k)
    if not radii:
        raise EmptyPeakError(f"no local peak at tau={tau}")
    radii = np.array(radii)
    vals = np.array([_g_safe(P, tau, r) for r in radii])
    B = float(vals.min())
    glob = radii[vals <= B + tie_tol]
    return PeakSet(float(tau), radii, vals, np.array(seg_ids), B, float(glob.max()), glob)


def _g_safe(P, tau, r):
    if r == 0.0:
        return float(P.d(0.0)) if tau == 0 else float("inf")
    return float(P.g(tau, r))


def significant_peaks(P: RadialPotential, peaks: PeakSet, policy: CutoffPolicy, n: Optional[int] = None) -> np.ndarray:
    """Peaks with ``g_tau(r) < B_tau + delta_n``."""
    if n is not None and n != policy.n:
        policy = CutoffPolicy(n, policy.C_cut)
    return peaks.local_peaks[peaks.values < peaks.B_tau + policy.delta_n]


def min_gap_lower_bound(P: RadialPotential, peaks: PeakSet, r: float) -> float:
    """Empirical ``(g_tau(r) - B_tau) / min(dist(r, LP)^2, 1)``; ``+inf`` on a peak."""
    if r > P.r_max or r < 0:
        warnings.warn("radius clamped to the working interval", RuntimeWarning, stacklevel=2)
        r = min(max(r, 0.0), P.r_max)
    dist = float(np.min(np.abs(peaks.local_peaks - r)))
    if dist == 0.0:
        return float("inf")
    return (_g_safe(P, peaks.tau, r) - peaks.B_tau) / min(dist * dist, 1.0)


# ---------------------------------------------------------------------------
# droplet


@dataclass
class DropletGeometry:
    components: List[tuple]
    masses: List[float]
    outposts: List[float] = field(default_factory=list)
    outpost_levels: List[float] = field(default_factory=list)
    segment_ids: List[int] = field(default_factory=list)

    @property
    def euler_char(self) -> int:
        return 1 if self.components[0][0] == 0.0 else 0

    @property
    def case(self) -> str:
        return "central_disk" if self.euler_char == 1 else "annular"

    @property
    def N(self) -> int:
        """Number of spectral gaps."""
        return len(self.components) - 1

    @property
    def a(self):
        return [c[0] for c in self.components]

    @property
    def b(self):
        return [c[1] for c in self.components]

    def prev_mass(self, nu: int) -> float:
        return 0.0 if nu == 0 else self.masses[nu - 1]

    def to_dict(self) -> dict:
        return {
            "components": [list(c) for c in self.components],
            "masses": list(self.masses),
            "outposts": list(self.outposts),
            "outpost_levels": list(self.outpost_levels),
            "euler_char": self.euler_char,
            "case": self.case,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _best_segment(P, segs, tau):
    best, val = None, math.inf
    for k, seg in enumerate(segs):
        if seg.T_lo <= tau <= seg.T_hi:
            if tau == seg.T_lo and seg.lo > 0:
                continue
            r = _solve_level(P, seg, tau)
            v = _g_safe(P, tau, r)
            # prefer the larger radius on ties (beta_tau is the largest global peak)
            if v < val - TIE_TOL or (abs(v - val) <= TIE_TOL and best is not None and k > best):
                best, val = k, min(v, val)
    return best, val


def compute_droplet(P: RadialPotential, sweep_points: int = SWEEP_POINTS) -> DropletGeometry:
    segs = mass_segments(P)
    if not segs:
        raise EmptyPeakError("Delta Q is nowhere positive on the working interval")
    taus = np.linspace(0.0, 1.0, sweep_points + 1)[1:]
    table = np.full((len(segs), len(taus)), np.inf)
    for k, seg in enumerate(segs):
        inside = (taus >= seg.T_lo) & (taus <= seg.T_hi)
        if seg.lo > 0:
            inside &= taus > seg.T_lo
        if inside.any():
            rr = _solve_levels(P, seg, taus[inside])
            safe = np.maximum(rr, 1e-300)
            vals = P.d(rr) - 2.0 * taus[inside] * np.log(safe)
            table[k, inside] = np.where(rr > 0, vals, np.inf)
    if not np.isfinite(table).any(axis=0).all():
        raise EmptyPeakError("no local peak for some mass level in (0, 1]")
    best = [int(k) for k in np.argmin(table, axis=0)]
    # a peak that only ties at the top level tau = 1 is an outpost, not a component
    if len(best) > 1 and best[-1] != best[-2] and abs(table[best[-1], -1] - table[best[-2], -1]) <= TIE_TOL:
        best[-1] = best[-2]

    def gap_fn(tau, ka, kb):
        ra = _solve_level(P, segs[ka], tau)
        rb = _solve_level(P, segs[kb], tau)
        return _g_safe(P, tau, ra) - _g_safe(P, tau, rb)

    runs = [best[0]]
    levels: List[float] = []
    for i in range(1, len(taus)):
        if best[i] == best[i - 1]:
            continue
        ka, kb = best[i - 1], best[i]
        if kb < ka:
            raise GeometryError("global peak moved inwards: beta_tau is not monotone")
        t0, t1 = taus[i - 1], taus[i]
        sa, sb = segs[ka], segs[kb]
        lo, hi = max(t0, sb.T_lo), min(t1, sa.T_hi)
        if not (sa.contains_level(t1) and sb.contains_level(t0)):
            # one of the peaks is born/dies between the grid points: the
            # crossing must still be a genuine tie inside [lo, hi]
            if lo >= hi:
                raise ResolutionError("global peak switched segments without a tie")
        f_lo, f_hi = gap_fn(lo, ka, kb), gap_fn(hi, ka, kb)
        if f_lo > 0 or f_hi < 0:
            raise ResolutionError("branching value could not be bracketed")
        M = brentq(gap_fn, lo, hi, args=(ka, kb), xtol=1e-15, rtol=1e-15) if f_lo < 0 < f_hi else (lo if f_lo == 0 else hi)
        # a third segment must not undercut the tie
        third, vth = _best_segment(P, segs, M)
        ra = _solve_level(P, sa, M)
        if vth < _g_safe(P, M, ra) - TIE_TOL and third not in (ka, kb):
            raise ResolutionError("two branching values are closer than the sweep resolution")
        levels.append(float(M))
        runs.append(kb)

    # components
    comps = []
    bounds = [0.0] + levels + [1.0]
    for idx, k in enumerate(runs):
        seg = segs[k]
        lo_t, hi_t = bounds[idx], bounds[idx + 1]
        a = _solve_level(P, seg, lo_t) if lo_t > seg.T_lo or seg.lo > 0 else seg.lo
        if idx == 0:
            if seg.lo == 0.0 and seg.T_lo >= 0.0:
                a = 0.0
            elif seg.T_lo <= 0.0:
                a = _solve_level(P, seg, 0.0)
            else:
                raise GeometryError("first droplet component has no zero-mass inner edge")
        b = _solve_level(P, seg, hi_t)
        if hi_t == 1.0 and seg.T_hi < 1.0:
            raise GeometryError("mass function does not reach 1 on the outer component")
        if b - a < MIN_WIDTH:
            raise DegenerateError(f"component {idx} has width {b - a:.3g}")
        comps.append((float(a), float(b)))
    masses = levels + [1.0]
    G = DropletGeometry(comps, masses, segment_ids=list(runs))

    # outposts: extra local peaks tied with the global one at tau in {0, M_nu, 1}
    for tau in [0.0] + levels + [1.0]:
        ps = local_peaks(P, tau)
        for r, v, sid in zip(ps.local_peaks, ps.values, ps.segment_ids):
            if sid in runs:
                continue
            if abs(v - ps.B_tau) <= TIE_TOL:
                if any(a <= r <= b for a, b in comps):
                    continue
                G.outposts.append(float(r))
                G.outpost_levels.append(float(tau))
    _verify(P, G)
    return G


def _verify(P, G: DropletGeometry):
    for nu, (a, b) in enumerate(G.components):
        if a > 0 and abs(float(P.mass(a)) - G.prev_mass(nu)) > 1e-9:
            raise GeometryError("inner edge mass mismatch")
        if abs(float(P.mass(b)) - G.masses[nu]) > 1e-9:
            raise GeometryError("outer edge mass mismatch")
    for nu in range(G.N):
        M = G.masses[nu]
        gb = float(P.g(M, G.components[nu][1]))
        ga = float(P.g(M, G.components[nu + 1][0]))
        if abs(gb - ga) > 1e-9:
            raise GeometryError(f"edges of gap {nu} are not at equal height ({gb - ga:.2e})")


def critical_indices(G: DropletGeometry, n: int) -> List[tuple]:
    """``(m_nu, x_nu) = (floor(M_nu n), {M_nu n})`` for each gap ``nu = 0..N-1``."""
    out = []
    for M in G.masses[:-1]:
        v = M * n
        m = math.floor(v + 1e-12) if abs(v - round(v)) < 1e-12 else math.floor(v)
        x = v - m
        if abs(x) < 1e-12:
            x = 0.0
        out.append((int(m), float(x)))
    return out


def component_segment(P: RadialPotential, G: DropletGeometry, nu: int) -> Segment:
    if not G.segment_ids:
        raise GeometryError("geometry carries no segment bookkeeping")
    return mass_segments(P)[G.segment_ids[nu]]


def peak_trajectory(P: RadialPotential, G: DropletGeometry, nu: int, tau_grid: Sequence[float]) -> np.ndarray:
    """Warm-started tracking of the peak ``r_{nu,tau}`` of component ``nu``."""
    seg = component_segment(P, G, nu)
    out = np.empty(len(tau_grid))
    prev = None
    for i, tau in enumerate(tau_grid):
        if not seg.T_lo <= tau <= seg.T_hi:
            raise TrackingError(f"tau={tau} leaves the basin of component {nu}")
        r = _solve_level(P, seg, float(tau), seed=prev)
        if tau > 0 and abs(float(P.mass(r)) - tau) > 1e-9:
            raise TrackingError("Newton tracking failed to converge")
        out[i] = r
        prev = r
    return out


def branch_peak(P: RadialPotential, G: DropletGeometry, nu: int, tau: float) -> Optional[float]:
    """Peak of component ``nu``'s segment at level ``tau`` (``None`` if absent)."""
    seg = component_segment(P, G, nu)
    if not seg.T_lo <= tau <= seg.T_hi:
        return None
    return _solve_level(P, seg, tau)
