"""Weighted time map of the Neumann problem ``d w'' + h(u, tau) = 0``.

For fixed ``tau`` with three zeros ``z1 < z2 < z3`` the first integral
``(d/2) w'^2 + H(u) = H(m)`` turns every half-orbit into a quadrature.  The
half-orbit starting at its minimum ``u = m`` reaches its maximum at the
conjugate amplitude ``M(m)`` after the "time"

    X(m) = sqrt(d/2) * int_m^M (delta + gamma*tau/u^2) / sqrt(H(m) - H(u)) du.

With ``u = m + (M - m) theta`` and ``theta = (1 - cos phi)/2`` the integrand
becomes ``weight(u) / sqrt((M - m) q(theta))`` where

    q(theta) = (H(m) - H(u)) / ((M - m) theta (1 - theta))

is positive and bounded on the closed interval, so no singular point is ever
evaluated.  Orbit ends are stored as offsets from the nearest zero of h so
that orbits passing exponentially close to a saddle stay resolvable (see
``levels``).

Orbits can be addressed by their minimum ``m`` or by a level coordinate
``lam = log(gap_centre / gap_saddle)`` where the two gaps are the distances
of the orbit energy from H(z2) and from the lower saddle level
``min(H(z1), H(z3))``.  ``lam -> -inf`` shrinks the orbit onto z2 and
``lam -> +inf`` pushes it onto the saddle.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from . import quadrature as quad
from .errors import DomainError, NoRootError, QuadratureError, StateError
from .levels import TINY_LEVEL, PotentialLevels
from .model import ModelParams, ZeroTriple, h_du, weight, zeros_of_h

DEFAULT_ORDER = 256
DEFAULT_SCAN = 512
EPS_M = 1e-9
LAM_SCAN = 512


class CaseTag(enum.Enum):
    CASE_I = "CaseI"
    CASE_II = "CaseII"


@dataclass(frozen=True)
class TimeMapCase:
    tag: CaseTag
    m_lower: float


@dataclass(frozen=True)
class Orbit:
    """End points of a half-orbit, each also stored as an offset from a zero."""

    m: float
    M: float
    m_offsets: np.ndarray
    M_offsets: np.ndarray
    span: float


@dataclass(frozen=True)
class HalfOrbit:
    """Quadrature data for one monotone half-orbit from ``m`` up to ``M``."""

    orbit: Orbit
    phi: np.ndarray
    weights: np.ndarray
    panel: np.ndarray
    breaks: np.ndarray
    theta: np.ndarray
    u: np.ndarray
    inv_sqrt_q: np.ndarray

    @property
    def m(self) -> float:
        return self.orbit.m

    @property
    def M(self) -> float:
        return self.orbit.M

    @property
    def span(self) -> float:
        return self.orbit.span


class TimeMap:
    """Time-map machinery for one value of ``tau``."""

    def __init__(self, tau: float, p: ModelParams, zeros: ZeroTriple | None = None,
                 order: int = DEFAULT_ORDER, method: str = "gauss"):
        z = zeros if zeros is not None else zeros_of_h(tau, p)
        z.require_complete()
        if method not in ("gauss", "tanh-sinh"):
            raise ValueError(f"unknown quadrature method {method!r}")
        self.tau = float(tau)
        self.p = p
        self.zeros = z
        self.lv = PotentialLevels(tau, p, z)
        self.z1, self.z2, self.z3 = (float(v) for v in self.lv.hi)
        self.order = order
        self.method = method
        self.hu2 = float(h_du(self.z2, tau, p))
        # H(z3) - H(z1) decides which saddle bounds the admissible orbits
        self.balance = float(self.lv.level[0, 2])
        self.saddle = 0 if self.balance >= 0 else 2
        # energy range of admissible orbits above H(z2)
        self.depth = float(self.lv.level[1, self.saddle])
        if self.saddle == 0:
            self.case = TimeMapCase(CaseTag.CASE_I, self.z1)
            self._lower_offsets = self.lv.offsets_from(0, 0.0)
        else:
            k, dm = self._m_side(2, 0.0)
            self._lower_offsets = self.lv.offsets_from(k, dm)
            self.case = TimeMapCase(CaseTag.CASE_II, self.lv.point(k, dm))

    @property
    def m_lower(self) -> float:
        return self.case.m_lower

    @property
    def H1(self) -> float:
        return float(self.lv.level[1, 0])

    @property
    def H3(self) -> float:
        return float(self.lv.level[1, 2])

    def weight(self, u):
        return weight(u, self.tau, self.p)

    # ------------------------------------------------------------------ orbits
    # (anchor, side of the anchor, span) for the minimum and the maximum of an orbit
    _M_ANCHORS = ((1, +1), (2, -1))
    _m_ANCHORS = ((0, +1), (1, -1))

    def _end(self, k: int, e_k: float, anchors, span: float):
        """Anchor and offset of an orbit end with energy ``H(Zk) + e_k``.

        The anchor is the zero whose level is closest to the energy, which
        keeps the offset accurate relative to its own size.
        """
        lv = self.lv
        best = min(anchors, key=lambda a: abs(e_k + float(lv.level[a[0], k])))
        a, side = best
        return a, lv.invert_local(a, side, e_k + float(lv.level[a, k]), span)

    def _m_side(self, k: int, e_k: float):
        return self._end(k, e_k, self._m_ANCHORS, float(self.lv.gap[1, 0]))

    def _M_side(self, k: int, e_k: float):
        return self._end(k, e_k, self._M_ANCHORS, float(self.lv.gap[2, 1]))

    def _orbit(self, km, dm, kM, dM) -> Orbit:
        lv = self.lv
        mo = lv.offsets_from(km, dm)
        Mo = lv.offsets_from(kM, dM)
        span = math.fsum([float(lv.gap[kM, km]), dM, -dm])
        return Orbit(lv.point(km, dm), lv.point(kM, dM), mo, Mo, span)

    def orbit_from_saddle_gap(self, gap: float) -> Orbit:
        """Orbit whose energy lies ``gap`` below the lower saddle level."""
        if not 0 < gap <= self.depth:
            raise DomainError(f"saddle gap {gap!r} outside (0, {self.depth!r}]")
        k = self.saddle
        return self._orbit(*self._m_side(k, -gap), *self._M_side(k, -gap))

    def orbit_from_centre_gap(self, e2: float) -> Orbit:
        """Orbit with H(m) - H(z2) = e2."""
        if not 0 < e2 <= self.depth:
            raise DomainError(f"centre gap {e2!r} outside (0, {self.depth!r}]")
        return self._orbit(*self._m_side(1, e2), *self._M_side(1, e2))

    def orbit_from_lam(self, lam: float) -> Orbit:
        gap = self.depth * float(expit(-lam))
        e2 = self.depth * float(expit(lam))
        if gap < TINY_LEVEL:
            raise DomainError(f"level coordinate {lam!r} beyond floating-point resolution")
        return self.orbit_from_saddle_gap(gap) if gap <= e2 else self.orbit_from_centre_gap(e2)

    def check_admissible(self, m: float):
        if not (self.m_lower <= m < self.z2):
            raise DomainError(f"m={m!r} outside admissible interval [{self.m_lower!r}, {self.z2!r})")

    def orbit_from_m(self, m: float) -> Orbit:
        self.check_admissible(m)
        lv = self.lv
        k = 0 if (m - self.z1) < (self.z2 - m) else 1
        dm = (m - float(lv.hi[k])) - float(lv.lo[k])
        if k == 0 and dm < 0:
            dm = 0.0
        e_k = lv.local(k, dm)
        if self.case.tag is CaseTag.CASE_II and e_k + float(lv.level[2, k]) >= 0:
            kM, dM = 2, 0.0
        else:
            if k == 1 and e_k <= 0:
                raise DomainError(f"m={m!r} is numerically indistinguishable from z2")
            kM, dM = self._M_side(k, e_k)
        return self._orbit(k, dm, kM, dM)

    def conjugate(self, m: float) -> float:
        """The amplitude ``M`` in (z2, z3] with ``H(M) = H(m)``."""
        return self.orbit_from_m(m).M

    # ---------------------------------------------------------------- integrand
    def limit(self, d: float) -> float:
        """lim X(m) as m -> z2 from below."""
        if self.hu2 <= 0:
            raise StateError("h_u(z2, tau) <= 0: the limit of X at z2 is infinite")
        return math.pi * math.sqrt(d * self.weight(self.z2) / self.hu2)

    def mode_threshold(self, j: int) -> float:
        """Largest d for which X = 1/j is guaranteed a root."""
        if self.hu2 <= 0:
            return 0.0
        return self.hu2 / (self.weight(self.z2) * (j * math.pi) ** 2)

    def _q(self, orb: Orbit, theta, comp):
        """q(theta), each half integrated from its own end point."""
        lv = self.lv
        L = orb.span
        theta = np.asarray(theta, dtype=float)
        comp = np.asarray(comp, dtype=float)
        lower = theta < 0.5
        u = np.where(lower, orb.m + L * theta, orb.M - L * comp)
        q = np.empty_like(theta)
        tl, cl = theta[lower], comp[lower]
        if tl.size:
            zero = tl == 0
            A = lv.integral(orb.m, orb.m_offsets, np.log1p(L * tl / orb.m))
            with np.errstate(divide="ignore", invalid="ignore"):
                ql = -A / (L * tl * cl)
            ql[zero] = -lv.P_at(orb.m, orb.m_offsets)
            q[lower] = ql
        tu, cu = theta[~lower], comp[~lower]
        if tu.size:
            zero = cu == 0
            B = -lv.integral(orb.M, orb.M_offsets, np.log1p(-L * cu / orb.M))
            with np.errstate(divide="ignore", invalid="ignore"):
                qu = B / (L * tu * cu)
            qu[zero] = lv.P_at(orb.M, orb.M_offsets)
            q[~lower] = qu
        return u, q

    def _peak_widths(self, orb: Orbit):
        """Estimated phi-widths of the peaks of 1/sqrt(q) at both ends."""
        th = np.array([0.0, 0.5, 1.0])
        _, q = self._q(orb, th, 1.0 - th)
        q0, qmid, q1 = (float(v) for v in q)
        out = []
        for qe in (q0, q1):
            if qe <= 0 or qmid <= qe:
                out.append(math.inf if qe > 0 else 0.0)
                continue
            theta_s = qe / (2.0 * (qmid - qe))
            out.append(2.0 * math.sqrt(theta_s))
        return out

    def half_orbit(self, m, extra_breaks=None) -> HalfOrbit:
        orb = m if isinstance(m, Orbit) else self.orbit_from_m(m)
        if not orb.span > 0:
            raise QuadratureError(f"degenerate half-orbit at m={orb.m!r}")
        if self.method == "tanh-sinh":
            theta, comp, wts = quad.tanh_sinh_theta()
            # d theta = sqrt(theta (1-theta)) d phi: fold that factor into the weight
            wts = wts / np.sqrt(theta * comp)
            phi = 2.0 * np.arcsin(np.sqrt(theta))
            panel = np.zeros(len(theta), dtype=int)
            breaks = np.array([0.0, math.pi])
        else:
            w0, w1 = self._peak_widths(orb)
            phi, theta, comp, wts, panel, breaks = quad.phi_rule(self.order, w0, w1, extra_breaks)
        u, q = self._q(orb, theta, comp)
        if not np.all(np.isfinite(q)) or np.any(q <= 0):
            raise QuadratureError(f"non-positive or non-finite integrand for m={orb.m!r} "
                                  "(too close to an endpoint)")
        return HalfOrbit(orb, phi, wts, panel, breaks, theta, u, 1.0 / np.sqrt(q))

    def piece_integral(self, orbit: HalfOrbit, d: float, values=None) -> float:
        """int over the half-orbit of ``values(u) dx`` (values = 1 gives X)."""
        dens = self.weight(orbit.u) * orbit.inv_sqrt_q
        if values is not None:
            dens = dens * values
        return math.sqrt(0.5 * d * orbit.span) * float(np.dot(orbit.weights, dens))

    def X(self, m, d: float) -> float:
        if not d > 0:
            raise DomainError("d must be positive")
        return self.piece_integral(self.half_orbit(m), d)

    def X_lam(self, lam: float, d: float) -> float:
        return self.X(self.orbit_from_lam(lam), d)

    # ------------------------------------------------------------- amplitude
    def scan_grid(self, eps_m: float = EPS_M, n: int = DEFAULT_SCAN) -> np.ndarray:
        """Grid on (m_lower, z2), geometric towards both ends."""
        lo, hi = self.m_lower, self.z2
        L = hi - lo
        half = n // 2
        s = np.geomspace(eps_m * L, 0.5 * L, half)
        grid = np.concatenate([lo + s, (hi - s)[::-1]])
        return np.unique(grid[(grid > lo) & (grid < hi)])

    def _scan_roots(self, points, F, solve):
        vals = []
        for pt in points:
            try:
                vals.append(F(pt))
            except (QuadratureError, DomainError):
                vals.append(math.nan)
        roots = []
        for k in range(len(points) - 1):
            a, b = vals[k], vals[k + 1]
            if not (np.isfinite(a) and np.isfinite(b)):
                continue
            if a == 0:
                roots.append(points[k])
            elif a * b < 0:
                roots.append(solve(points[k], points[k + 1]))
        return roots

    def solve_amplitude(self, j: int, d: float, eps_m: float = EPS_M, n_scan: int = DEFAULT_SCAN):
        """All roots m of X(m) = 1/j on the geometric m-grid, sorted."""
        target = 1.0 / j
        F = lambda m: self.X(float(m), d) - target
        grid = [float(v) for v in self.scan_grid(eps_m, n_scan)]
        roots = self._scan_roots(grid, F, lambda a, b: brentq(F, a, b, xtol=1e-300, rtol=1e-15))
        if not roots:
            raise NoRootError(f"X(m) = 1/{j} has no root for tau={self.tau!r}, d={d!r}")
        return sorted(roots)

    def lam_range(self):
        """Usable range of the level coordinate."""
        lo = math.log(TINY_LEVEL) - math.log(self.depth)
        return lo, -lo

    def solve_levels(self, j: int, d: float, n_scan: int = LAM_SCAN, lam_max: float | None = None):
        """All roots of X = 1/j in the level coordinate (reaches far closer to the saddle)."""
        target = 1.0 / j
        lo, hi = self.lam_range()
        if lam_max is not None:
            hi = min(hi, lam_max)
        F = lambda lam: self.X_lam(lam, d) - target
        grid = list(np.linspace(max(lo, -40.0), hi, n_scan))
        roots = self._scan_roots(grid, F, lambda a, b: brentq(F, a, b, xtol=1e-13, rtol=1e-15))
        if not roots:
            raise NoRootError(f"X = 1/{j} has no root for tau={self.tau!r}, d={d!r}")
        return sorted(roots)


def timemap_case(tau: float, p: ModelParams) -> TimeMapCase:
    return TimeMap(tau, p).case


def conjugate_M(m: float, tau: float, p: ModelParams) -> float:
    return TimeMap(tau, p).conjugate(m)


def time_map_X(m: float, tau: float, d: float, p: ModelParams, order: int = DEFAULT_ORDER,
               method: str = "gauss") -> float:
    return TimeMap(tau, p, order=order, method=method).X(m, d)


def time_map_limit(tau: float, d: float, p: ModelParams) -> float:
    return TimeMap(tau, p).limit(d)


def solve_amplitude(j: int, tau: float, d: float, p: ModelParams, eps_m: float = EPS_M,
                    n_scan: int = DEFAULT_SCAN, order: int = DEFAULT_ORDER):
    tm = TimeMap(tau, p, order=order)
    if tm.hu2 <= 0:
        raise NoRootError("h_u(z2, tau) <= 0 (degenerate centre) is not supported")
    return tm.solve_amplitude(j, d, eps_m, n_scan)
