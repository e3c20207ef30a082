"""Quadrature rules on the angle variable phi in [0, pi].

Integrals over a half-orbit ``u in [m, M]`` are mapped to ``theta in [0, 1]``
and then to ``phi`` by ``theta = (1 - cos phi)/2``.  That removes the two
inverse square-root endpoint singularities; what is left is a smooth
integrand which may still be sharply peaked at an end when the orbit lingers
near a saddle.  Panels are therefore graded geometrically towards such an
end.
"""

from __future__ import annotations

import functools
import math

import numpy as np

PANEL_ORDER = 16
GRADING_RATIO = 0.25


@functools.lru_cache(maxsize=32)
def gauss_legendre(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def composite_rule(breaks, n: int = PANEL_ORDER):
    """Nodes, weights and panel index of composite Gauss-Legendre on ``breaks``."""
    breaks = np.asarray(breaks, dtype=float)
    x, w = gauss_legendre(n)
    lo, hi = breaks[:-1, None], breaks[1:, None]
    half = 0.5 * (hi - lo)
    nodes = (lo + hi) * 0.5 + half * x
    weights = half * w
    panel = np.repeat(np.arange(len(breaks) - 1), n)
    return nodes.ravel(), weights.ravel(), panel


def grading_breaks(width: float, top: float = math.pi / 4, ratio: float = GRADING_RATIO):
    """Geometric breakpoints ``top, top*ratio, ...`` down to ``width/8`` (exclusive of 0)."""
    out = []
    b = top
    floor = max(width / 8.0, 1e-300)
    while b > floor:
        out.append(b)
        b *= ratio
    return out


def phi_breaks(order: int, width0: float = math.inf, width1: float = math.inf,
               panel_order: int = PANEL_ORDER):
    """Panel breakpoints on [0, pi].

    ``order // panel_order`` uniform panels cover [0, pi]; when a peak width
    (in phi) at either end is below the first panel width, the end panel is
    replaced by a geometric cascade.
    """
    lower, upper = _split_breaks(order, width0, width1, panel_order)
    return np.unique(np.concatenate([lower, math.pi - upper]))


def _split_breaks(order, width0, width1, panel_order, extra=None):
    """Breakpoints of the lower half as phi and of the upper half as pi - phi.

    Holding the upper half as a distance from pi keeps panels narrower than
    the spacing of floats near pi distinct.
    """
    n_uniform = max(2, order // panel_order)
    uniform = np.linspace(0.0, math.pi, n_uniform + 1)
    h = uniform[1]
    lower = [b for b in uniform if b <= 0.5 * math.pi] + [0.5 * math.pi]
    upper = [math.pi - b for b in uniform if b >= 0.5 * math.pi] + [0.5 * math.pi, 0.0]
    if width0 < h:
        lower += grading_breaks(width0, top=h)
    if width1 < h:
        upper += grading_breaks(width1, top=h)
    if extra is not None:
        extra = np.asarray(extra, dtype=float)
        lower += list(extra[extra <= 0.5 * math.pi])
        upper += list(math.pi - extra[extra > 0.5 * math.pi])
    return np.unique(lower), np.unique(upper)


def phi_rule(order: int, width0: float = math.inf, width1: float = math.inf, extra=None,
             panel_order: int = PANEL_ORDER):
    """Composite Gauss rule on [0, pi] returned as ``(phi, theta, 1 - theta, weights, panel, breaks)``.

    ``breaks`` lists the panel ends in phi, so panels too narrow to separate in
    phi near pi share a break value; ``theta`` and its complement are always
    computed from the distance to the nearer end.
    """
    lower, upper = _split_breaks(order, width0, width1, panel_order, extra)
    pl, wl, kl = composite_rule(lower, panel_order)
    pu, wu, ku = composite_rule(upper, panel_order)
    n_low = len(lower) - 1
    n_up = len(upper) - 1
    # upper panels in increasing phi are the psi panels in decreasing order
    order_u = np.argsort(-pu, kind="stable")
    psi, wu, ku = pu[order_u], wu[order_u], ku[order_u]
    panel = np.concatenate([kl, n_low + (n_up - 1 - ku)])
    phi = np.concatenate([pl, math.pi - psi])
    tl, cl = theta_of_phi(pl)
    cu, tu = theta_of_phi(psi)
    breaks = np.concatenate([lower, math.pi - upper[::-1][1:]])
    return (phi, np.concatenate([tl, tu]), np.concatenate([cl, cu]), np.concatenate([wl, wu]),
            panel, breaks)


def theta_of_phi(phi):
    """Return ``(theta, 1 - theta)`` computed without cancellation."""
    s = np.sin(0.5 * phi)
    c = np.cos(0.5 * phi)
    return s * s, c * c


def tanh_sinh_theta(level: int = 7, t_max: float = 3.5):
    """Tanh-sinh nodes on theta in (0, 1) as ``(theta, 1 - theta, weight)``.

    Used only as an independent cross-check of the cosine/Gauss rule.
    """
    h = 2.0 ** (-level) * 4
    t = np.arange(-t_max, t_max + h / 2, h)
    s = 0.5 * math.pi * np.sinh(t)
    # theta = (1 + tanh s)/2 = 1/(1+exp(-2s)); complement = 1/(1+exp(2s))
    theta = 1.0 / (1.0 + np.exp(-2.0 * s))
    comp = 1.0 / (1.0 + np.exp(2.0 * s))
    weight = h * 0.5 * math.pi * np.cosh(t) / (2.0 * np.cosh(s) ** 2)
    keep = (theta > 0) & (comp > 0)
    return theta[keep], comp[keep], weight[keep]
