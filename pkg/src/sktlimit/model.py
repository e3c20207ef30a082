"""Parameters, reaction terms and the scalar nonlinearity of the limiting system.

The limiting system is posed for the pair ``(w, tau)`` where ``tau = u v`` is
the constant product of the two densities and ``w = delta*u - gamma*tau/u``.
Everything downstream is organised around

    h(u, tau) = f(u, tau/u) - gamma * g(u, tau/u)

and its weighted potential ``H(u, tau) = int_{z2}^{u} h(s) (delta + gamma*tau/s**2) ds``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError, RegimeError, RootFindingFailure, StateError

ATOL_ROOT = 1e-11
MERGE_RTOL = 1e-8
_IMAG_RTOL = 1e-9


@dataclass(frozen=True)
class ModelParams:
    a1: float
    a2: float
    b1: float
    b2: float
    c1: float
    c2: float
    gamma: float = 1.0
    delta: float = 1.0

    def __post_init__(self):
        for name in ("a1", "a2", "b1", "b2", "c1", "c2", "gamma", "delta"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be a positive finite number, got {value!r}")

    @property
    def A(self) -> float:
        return self.a1 / self.a2

    @property
    def B(self) -> float:
        return self.b1 / self.b2

    @property
    def C(self) -> float:
        return self.c1 / self.c2

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("a1", "a2", "b1", "b2", "c1", "c2", "gamma", "delta")}


# strong competition, used for the h-profiles with tau* = 1/9
STRONG_EXAMPLE = ModelParams(1.0, 1.0, 1.0, 2.0, 2.0, 1.0, gamma=1.0, delta=1.0)
# weak competition setting with alpha = beta and d1 = d2
WEAK_EXAMPLE = ModelParams(15 / 2, 16 / 7, 4.0, 1.0, 6.0, 2.0, gamma=1.0, delta=1.0)


class RegimeTag(enum.Enum):
    WEAK = "WeakCompetition"
    STRONG = "StrongCompetition"
    DEGENERATE = "Degenerate"


@dataclass(frozen=True)
class Regime:
    tag: RegimeTag
    reason: str = ""

    @property
    def is_competitive(self) -> bool:
        return self.tag is not RegimeTag.DEGENERATE


def classify_regime(p: ModelParams) -> Regime:
    A, B, C = p.A, p.B, p.C
    if C < A < B:
        return Regime(RegimeTag.WEAK)
    if B < A < C:
        return Regime(RegimeTag.STRONG)
    failed = []
    if A == B:
        failed.append("A = B")
    if A == C:
        failed.append("A = C")
    if not failed:
        failed.append(f"neither C < A < B nor B < A < C (A={A:.6g}, B={B:.6g}, C={C:.6g})")
    return Regime(RegimeTag.DEGENERATE, "; ".join(failed))


def reaction_f(u, v, p: ModelParams):
    return u * (p.a1 - p.b1 * u - p.c1 * v)


def reaction_g(u, v, p: ModelParams):
    return v * (p.a2 - p.b2 * u - p.c2 * v)


def uv_from_w(w, tau, p: ModelParams):
    """Invert ``w = delta*u - gamma*v`` on the hyperbola ``u*v = tau``.

    The larger of the two square-root sums is formed directly and the other
    density is recovered from ``tau`` to avoid cancellation.
    """
    if np.any(np.asarray(tau) <= 0):
        raise DomainError("tau must be positive")
    w = np.asarray(w, dtype=float)
    r = np.sqrt(w * w + 4.0 * p.gamma * p.delta * tau)
    u_big = (r + np.abs(w)) / (2.0 * p.delta)
    v_big = (r + np.abs(w)) / (2.0 * p.gamma)
    u = np.where(w >= 0, u_big, tau / v_big)
    v = np.where(w >= 0, tau / u_big, v_big)
    if u.ndim == 0:
        return float(u), float(v)
    return u, v


def w_from_uv(u, v, p: ModelParams):
    if np.any(np.asarray(u) <= 0) or np.any(np.asarray(v) <= 0):
        raise DomainError("u and v must be positive")
    return p.delta * u - p.gamma * v, u * v


def w_of_u(u, tau, p: ModelParams):
    return p.delta * u - p.gamma * tau / u


def weight(u, tau, p: ModelParams):
    """dw/du = delta + gamma*tau/u**2."""
    return p.delta + p.gamma * tau / (u * u)


def _check_positive(u):
    if np.any(np.asarray(u) <= 0):
        raise DomainError("u must be positive")


def h_value(u, tau, p: ModelParams):
    _check_positive(u)
    g = p.gamma
    return (p.a1 * u - p.b1 * u * u + (g * p.b2 - p.c1) * tau
            - g * p.a2 * tau / u + g * p.c2 * tau * tau / (u * u))


def h_du(u, tau, p: ModelParams):
    _check_positive(u)
    g = p.gamma
    return (p.a1 - 2.0 * p.b1 * u + g * p.a2 * tau / (u * u)
            - 2.0 * g * p.c2 * tau * tau / (u * u * u))


def quartic_coefficients(tau: float, p: ModelParams) -> np.ndarray:
    """Coefficients (highest degree first) of ``u**2 * h(u, tau)``."""
    g = p.gamma
    return np.array([-p.b1, p.a1, (g * p.b2 - p.c1) * tau, -g * p.a2 * tau, g * p.c2 * tau * tau])


@dataclass(frozen=True)
class ZeroTriple:
    tau: float
    zeros: tuple
    complete: bool

    @property
    def z1(self) -> float:
        return self.zeros[0]

    @property
    def z2(self) -> float:
        self.require_complete()
        return self.zeros[1]

    @property
    def z3(self) -> float:
        return self.zeros[-1]

    def require_complete(self):
        if not self.complete:
            raise StateError(f"h(., tau={self.tau:.17g}) has {len(self.zeros)} positive zero(s), not three")


def zeros_of_h(tau: float, p: ModelParams, atol: float = ATOL_ROOT) -> ZeroTriple:
    """Positive zeros of h(., tau) from the companion matrix, Newton polished."""
    if not tau > 0:
        raise DomainError("tau must be positive")
    raw = np.roots(quartic_coefficients(tau, p))
    cand = sorted(float(r.real) for r in raw
                  if r.real > 0 and abs(r.imag) <= _IMAG_RTOL * max(1.0, abs(r.real)))
    polished = []
    for z in cand:
        hz = h_value(z, tau, p)
        dh = h_du(z, tau, p)
        if dh != 0:
            z_new = z - hz / dh
            if z_new > 0 and abs(h_value(z_new, tau, p)) <= abs(hz):
                z, hz = z_new, h_value(z_new, tau, p)
        if abs(hz) > atol:
            raise RootFindingFailure(f"|h({z:.17g}, {tau:.17g})| = {abs(hz):.3e} after polishing")
        polished.append(float(z))
    merged: list[float] = []
    for z in polished:
        if merged and abs(z - merged[-1]) <= MERGE_RTOL * max(abs(z), abs(merged[-1])):
            merged[-1] = 0.5 * (merged[-1] + z)
        else:
            merged.append(z)
    return ZeroTriple(float(tau), tuple(merged), len(merged) == 3)


def tau_bar(p: ModelParams) -> float:
    return min(p.a1 ** 2 / (4 * p.b1 * p.c1), p.a2 ** 2 / (4 * p.b2 * p.c2))


def discriminant_D(p: ModelParams) -> float:
    A, B, C = p.A, p.B, p.C
    return p.gamma * p.b2 * (A - B) * (B + C - 2 * A) + p.c2 * (C - A) * (A * (B + C) - 2 * B * C)


@dataclass(frozen=True)
class ConstantState:
    u_star: float
    v_star: float
    w_star: float
    tau_star: float


def constant_state(p: ModelParams) -> ConstantState:
    regime = classify_regime(p)
    det = p.b1 * p.c2 - p.b2 * p.c1
    if not regime.is_competitive:
        raise RegimeError(f"no positive constant state: {regime.reason}")
    if det == 0:
        raise RegimeError("b1*c2 = b2*c1")
    u = (p.a1 * p.c2 - p.a2 * p.c1) / det
    v = (p.b1 * p.a2 - p.b2 * p.a1) / det
    return ConstantState(u, v, p.delta * u - p.gamma * v, u * v)


class Landmarks(NamedTuple):
    Z1f: float
    Z2f: float
    Z1g: float
    Z2g: float


def fg_zero_landmarks(tau: float, p: ModelParams) -> Landmarks:
    """Zeros of u -> f(u, tau/u) and u -> g(u, tau/u)."""
    disc_f = p.a1 ** 2 - 4 * p.b1 * p.c1 * tau
    disc_g = p.a2 ** 2 - 4 * p.b2 * p.c2 * tau
    if disc_f < 0 or disc_g < 0:
        raise DomainError(f"tau={tau!r} exceeds tau_bar={tau_bar(p)!r}")
    rf, rg = math.sqrt(disc_f), math.sqrt(disc_g)
    # small roots written as c*tau / (large root) to keep relative accuracy
    Z2f = (p.a1 + rf) / (2 * p.b1)
    Z2g = (p.a2 + rg) / (2 * p.b2)
    Z1f = 2 * p.c1 * tau / (p.a1 + rf)
    Z1g = 2 * p.c2 * tau / (p.a2 + rg)
    return Landmarks(Z1f, Z2f, Z1g, Z2g)


def f_along(u, tau, p: ModelParams):
    """f(u, tau/u) = u (a1 - b1 u) - c1 tau."""
    return u * (p.a1 - p.b1 * u) - p.c1 * tau


def g_along(u, tau, p: ModelParams):
    """g(u, tau/u)."""
    v = tau / u
    return v * (p.a2 - p.c2 * v) - p.b2 * tau


def tau_tilde(p: ModelParams, resolution: float = 1e-8, n_scan: int = 4000) -> float:
    """min(T~, tau_bar): end of the initial interval of tau with three zeros.

    A uniform scan finds the first tau without three zeros, then bisection on
    the completeness flag narrows it to ``resolution``.
    """
    tb = tau_bar(p)
    grid = np.linspace(tb / n_scan, tb, n_scan)
    flags = [zeros_of_h(float(t), p).complete for t in grid]
    if all(flags):
        return tb
    i = flags.index(False)
    hi = float(grid[i])
    lo = float(grid[i - 1]) if i > 0 else hi * 1e-6
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if zeros_of_h(mid, p).complete:
            lo = mid
        else:
            hi = mid
    return lo


class Potential:
    """Closed-form weighted potential H(., tau) anchored at z2(tau).

    The integrand ``h(s)*(delta + gamma*tau/s**2)`` is a Laurent polynomial

        k2 s^2 + k1 s + k0 + e1/s + e2/s^2 + e3/s^3 + e4/s^4

    whose antiderivative has a single logarithm.  Differences of the
    antiderivative are evaluated through the divided difference
    ``mean(x, y) = (F(x) - F(y)) / (x - y)`` so that no two large values are
    subtracted when x and y are close.
    """

    def __init__(self, tau: float, p: ModelParams, zeros: ZeroTriple | None = None):
        if not tau > 0:
            raise DomainError("tau must be positive")
        self.tau = float(tau)
        self.p = p
        self.zeros = zeros if zeros is not None else zeros_of_h(tau, p)
        g, dl = p.gamma, p.delta
        k = (g * p.b2 - p.c1) * tau
        self.k2 = -dl * p.b1
        self.k1 = dl * p.a1
        self.k0 = dl * k - g * tau * p.b1
        self.e1 = g * tau * (p.a1 - dl * p.a2)
        self.e2 = g * tau * (dl * p.c2 * tau + k)
        self.e3 = -g * g * p.a2 * tau * tau
        self.e4 = g * g * p.c2 * tau ** 3

    @property
    def anchor(self) -> float:
        return self.zeros.z2

    def integrand(self, s):
        s = np.asarray(s, dtype=float)
        r = 1.0 / s
        return self.k2 * s * s + self.k1 * s + self.k0 + r * (self.e1 + r * (self.e2 + r * (self.e3 + r * self.e4)))

    def antiderivative(self, s):
        s = np.asarray(s, dtype=float)
        r = 1.0 / s
        return (self.k2 * s ** 3 / 3 + self.k1 * s * s / 2 + self.k0 * s + self.e1 * np.log(s)
                - self.e2 * r - self.e3 * r * r / 2 - self.e4 * r ** 3 / 3)

    def mean(self, x, y):
        """Average of the integrand over [y, x] (order irrelevant)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        t = (x - y) / y
        small = np.abs(t) < 1e-5
        ts = np.where(small, 0.0, t)
        log_ratio = np.where(small, 1.0 - t / 2 + t * t / 3 - t ** 3 / 4,
                             np.log1p(ts) / np.where(small, 1.0, ts)) / y
        rxy = 1.0 / (x * y)
        sq = x * x + x * y + y * y
        return (self.k2 * sq / 3 + self.k1 * (x + y) / 2 + self.k0 + self.e1 * log_ratio
                + self.e2 * rxy + self.e3 * (x + y) * rxy * rxy / 2 + self.e4 * sq * rxy ** 3 / 3)

    def diff(self, x, y):
        """H(x) - H(y)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return (x - y) * self.mean(x, y)

    def __call__(self, u):
        _check_positive(u)
        return self.diff(u, self.anchor)


def potential_H(u, tau: float, p: ModelParams):
    z = zeros_of_h(tau, p)
    z.require_complete()
    out = Potential(tau, p, z)(u)
    return float(out) if np.ndim(out) == 0 else out
