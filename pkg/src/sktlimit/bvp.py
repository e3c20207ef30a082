"""Neumann profiles of ``d w'' + h(u, tau) = 0`` built from a shooting amplitude.

A mode-j profile consists of j monotone pieces of length 1/j.  The first
piece rises from ``u = m`` at x = 0 to ``u = M(m)`` at x = 1/j; the others
are mirror images.  Along a piece ``dx/du = sqrt(d/2) weight(u) /
sqrt(H(m) - H(u))``, which is integrated with the same angle substitution as
the time map.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import quadrature as quad
from .errors import AssemblyError, DomainError
from .model import ModelParams, f_along, g_along, h_value, potential_H
from .timemap import DEFAULT_ORDER, HalfOrbit, TimeMap

DEFAULT_NODES = 257
ASSEMBLY_TOL = 1e-7


@dataclass(frozen=True)
class Profile:
    j: int
    orientation: str
    tau: float
    d: float
    m: float
    M: float
    x: np.ndarray
    u: np.ndarray
    w: np.ndarray
    int_f: float = math.nan
    int_g: float = math.nan
    params: ModelParams | None = field(default=None, repr=False, compare=False)

    @property
    def v(self) -> np.ndarray:
        return self.tau / self.u

    @property
    def samples(self):
        return list(zip(self.x.tolist(), self.u.tolist(), self.w.tolist()))

    def shifted(self) -> "Profile":
        """The same solution translated by 1/j (orientation flipped)."""
        other = "-" if self.orientation == "+" else "+"
        x, u, w = _shift_by_period(self.x, self.u, self.w, self.j)
        return Profile(self.j, other, self.tau, self.d, self.m, self.M, x, u, w,
                       self.int_f, self.int_g, self.params)

    def to_csv(self, path):
        write_profile_csv(self, path)


def _shift_by_period(x, u, w, j):
    """Samples of u(x + 1/j) for a profile made of j equal pieces."""
    if j % 2 == 1:
        # with j odd, x + 1/j and 1 - x differ by a whole period 2/j
        return 1.0 - x[::-1], u[::-1], w[::-1]
    k = (len(x) - 1) // j
    L = x[k]
    xs = np.concatenate([x[k:] - L, x[1:k + 1] + 1.0 - L])
    xs[-1] = 1.0
    return xs, np.concatenate([u[k:], u[1:k + 1]]), np.concatenate([w[k:], w[1:k + 1]])


def _piece_nodes(tm: TimeMap, orbit: HalfOrbit, d: float, n_nodes: int):
    """Chebyshev-distributed (x, u) on one monotone piece, x measured from u = m."""
    phi_k = np.linspace(0.0, math.pi, n_nodes)
    fine = tm.half_orbit(orbit.orbit, extra_breaks=phi_k)
    dens = tm.weight(fine.u) * fine.inv_sqrt_q * fine.weights
    scale = math.sqrt(0.5 * d * fine.span)
    panel_sums = np.bincount(fine.panel, weights=dens, minlength=len(fine.breaks) - 1)
    cum = np.concatenate([[0.0], np.cumsum(panel_sums)]) * scale
    idx = np.searchsorted(fine.breaks, phi_k)
    xs = cum[idx]
    # panels narrower than the float spacing near pi all end at the last node
    xs[-1] = cum[-1]
    theta, comp = quad.theta_of_phi(phi_k)
    u = np.where(theta < 0.5, orbit.m + fine.span * theta, orbit.M - fine.span * comp)
    u[0], u[-1] = orbit.m, orbit.M
    return xs, u, cum[-1]


def assemble(j: int, orientation: str, x_piece, u_piece, X: float):
    """Glue j mirrored copies of one rising piece into a profile on [0, 1]."""
    if orientation not in ("+", "-"):
        raise DomainError(f"orientation must be '+' or '-', got {orientation!r}")
    first_rising = orientation == "+"
    xs, us = [], []
    for i in range(j):
        rising = (i % 2 == 0) == first_rising
        if rising:
            xi, ui = i * X + x_piece, u_piece
        else:
            xi, ui = i * X + (X - x_piece[::-1]), u_piece[::-1]
        if i > 0:
            xi, ui = xi[1:], ui[1:]
        xs.append(xi)
        us.append(ui)
    x = np.concatenate(xs)
    total = j * X
    if abs(total - 1.0) > ASSEMBLY_TOL:
        raise AssemblyError(f"pieces span {total!r} instead of 1 (X - 1/j = {X - 1.0 / j:.3e})")
    x = x / total
    x[0], x[-1] = 0.0, 1.0
    return x, np.concatenate(us)


def reconstruct_profile(j: int, orientation: str, m, tau: float, d: float, p: ModelParams,
                        n_nodes: int = DEFAULT_NODES, order: int = DEFAULT_ORDER,
                        timemap: TimeMap | None = None) -> Profile:
    """Mode-j profile with minimum ``m`` (a float, or an ``Orbit`` near a saddle)."""
    if j < 1:
        raise DomainError("mode j must be a positive integer")
    if n_nodes < 3:
        raise DomainError("need at least three nodes per piece")
    tm = timemap if timemap is not None else TimeMap(tau, p, order=order)
    orbit = tm.half_orbit(m)
    x_piece, u_piece, X = _piece_nodes(tm, orbit, d, n_nodes)
    x, u = assemble(j, orientation, x_piece, u_piece, X)
    w = p.delta * u - p.gamma * tau / u
    fi, gi = _orbit_integrals(tm, orbit, d, j)
    return Profile(j, orientation, float(tau), float(d), float(orbit.m), float(orbit.M), x, u, w,
                   fi, gi, p)


def constant_profile(u_value: float, tau: float, d: float, p: ModelParams, n: int = DEFAULT_NODES,
                     j: int = 1) -> Profile:
    x = np.linspace(0.0, 1.0, n)
    u = np.full(n, float(u_value))
    w = p.delta * u - p.gamma * tau / u
    fi = float(f_along(u_value, tau, p))
    gi = float(g_along(u_value, tau, p))
    return Profile(j, "+", float(tau), float(d), float(u_value), float(u_value), x, u, w, fi, gi, p)


def _orbit_integrals(tm: TimeMap, orbit: HalfOrbit, d: float, j: int):
    f = f_along(orbit.u, tm.tau, tm.p)
    g = g_along(orbit.u, tm.tau, tm.p)
    return j * tm.piece_integral(orbit, d, f), j * tm.piece_integral(orbit, d, g)


def constraint_integrals(profile: Profile, p: ModelParams, order: int = DEFAULT_ORDER,
                         timemap: TimeMap | None = None):
    """(int_0^1 f dx, int_0^1 g dx) computed in the u variable."""
    if profile.M == profile.m:
        return float(f_along(profile.m, profile.tau, p)), float(g_along(profile.m, profile.tau, p))
    tm = timemap if timemap is not None else TimeMap(profile.tau, p, order=order)
    return _orbit_integrals(tm, tm.half_orbit(profile.m), profile.d, profile.j)


def fd_weights(x0: float, xs, k: int) -> np.ndarray:
    """Finite-difference weights for the k-th derivative at x0 on nodes xs (Fornberg)."""
    xs = np.asarray(xs, dtype=float)
    n = len(xs)
    c = np.zeros((n, k + 1))
    c1 = 1.0
    c4 = xs[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, k)
        c2 = 1.0
        c5 = c4
        c4 = xs[i] - x0
        for jj in range(i):
            c3 = xs[i] - xs[jj]
            c2 *= c3
            if jj == i - 1:
                for s in range(mn, 0, -1):
                    c[i, s] = c1 * (s * c[i - 1, s - 1] - c5 * c[i - 1, s]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for s in range(mn, 0, -1):
                c[jj, s] = (c4 * c[jj, s] - s * c[jj, s - 1]) / c3
            c[jj, 0] = c4 * c[jj, 0] / c3
        c1 = c2
    return c[:, k]


def second_derivative(x, w) -> np.ndarray:
    """Three-point second differences on a nonuniform grid (interior nodes)."""
    hm = x[1:-1] - x[:-2]
    hp = x[2:] - x[1:-1]
    return 2.0 * ((w[2:] - w[1:-1]) / hp - (w[1:-1] - w[:-2]) / hm) / (hp + hm)


def residual_check(profile: Profile, p: ModelParams, stencil: int = 5):
    """(max interior |d w'' + h|, max endpoint |w'|)."""
    x, u, w = profile.x, profile.u, profile.w
    d2 = second_derivative(x, w)
    res = profile.d * d2 + h_value(u[1:-1], profile.tau, p)
    ode = float(np.max(np.abs(res))) if res.size else 0.0
    k = min(stencil, len(x))
    left = float(np.dot(fd_weights(x[0], x[:k], 1), w[:k]))
    right = float(np.dot(fd_weights(x[-1], x[-k:], 1), w[-k:]))
    return ode, max(abs(left), abs(right))


def first_derivative(x, w, stencil: int = 7) -> np.ndarray:
    """w' at every node from local Fornberg stencils of ``stencil`` nodes."""
    n = len(x)
    k = min(stencil, n)
    out = np.empty(n)
    for i in range(n):
        lo = min(max(i - k // 2, 0), n - k)
        out[i] = np.dot(fd_weights(x[i], x[lo:lo + k], 1), w[lo:lo + k])
    return out


def energy_spread(profile: Profile, p: ModelParams, stencil: int = 7) -> float:
    """Relative spread of (d/2) w'^2 + H(u) along a sampled profile.

    ``w'`` comes from finite differences of the samples, so the result
    measures the sampling as much as the profile itself.
    """
    wp = first_derivative(profile.x, profile.w, stencil)
    H = potential_H(profile.u, profile.tau, p)
    E = 0.5 * profile.d * wp ** 2 + H
    scale = max(float(np.ptp(H)), 1e-300)
    return float(np.ptp(E) / scale)


def level_fraction(profile: Profile, levels, tol: float = 1e-2) -> float:
    """Fraction of [0, 1], by length, on which u lies within ``tol`` of one of ``levels``.

    Each interval between samples counts half for each of its ends.
    """
    u = profile.u
    near = np.zeros(len(u), dtype=bool)
    for level in levels:
        near |= np.abs(u - level) < tol
    dx = np.diff(profile.x)
    return float(0.5 * np.dot(dx, near[:-1] + near[1:].astype(float)) / (profile.x[-1] - profile.x[0]))


def write_profile_csv(profile: Profile, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x", "u", "w", "v"])
        for xk, uk, wk, vk in zip(profile.x, profile.u, profile.w, profile.v):
            wr.writerow([f"{xk:.17g}", f"{uk:.17g}", f"{wk:.17g}", f"{vk:.17g}"])


def read_profile_csv(path):
    data = np.genfromtxt(path, delimiter=",", names=True)
    return data["x"], data["u"], data["w"], data["v"]
