"""Linearisation of the limiting system at the constant solution.

The eigenvalues of ``I - L(d)`` split into the pair ``mu0`` of a 2x2 matrix
acting on (mean of the perturbation, perturbation of tau) and the sequence

    mu_j(d) = (lambda_j - K / ((delta u* + gamma v*) d)) / (lambda_j + 1),

with ``K = (gamma b2 + c1) tau* - b1 u*^2 - gamma c2 v*^2`` and
``lambda_j = (j pi)^2`` the Neumann eigenvalues on (0, 1).  The Leray-Schauder
index of the constant solution is ``(-1)^sigma`` where sigma counts negative
real eigenvalues.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DiscriminantError, DomainError, NumericalFailure, RegimeError
from .model import ModelParams, RegimeTag, classify_regime, constant_state, discriminant_D

J_MAX = 16
AGREE_RTOL = 1e-10
IMAG_TOL = 1e-12


def lambda_j(j: int) -> float:
    if isinstance(j, bool) or int(j) != j or j < 0:
        raise DomainError(f"mode index must be a non-negative integer, got {j!r}")
    return (int(j) * math.pi) ** 2


def _numerator(p: ModelParams):
    cs = constant_state(p)
    g = p.gamma
    K = (g * p.b2 + p.c1) * cs.tau_star - p.b1 * cs.u_star ** 2 - g * p.c2 * cs.v_star ** 2
    return cs, K, p.delta * cs.u_star + g * cs.v_star


def bifurcation_point(p: ModelParams, j: int) -> float:
    """d^(j), evaluated from both closed forms, which must agree."""
    if j < 1:
        raise DomainError("bifurcation points are indexed from j = 1")
    D = discriminant_D(p)
    cs, K, S = _numerator(p)
    if D <= 0:
        raise DiscriminantError(f"D = {D!r} <= 0: the constant branch has no bifurcation points")
    lam = lambda_j(j)
    direct = K / (S * lam)
    factored = p.a2 ** 2 * p.b2 * p.c2 * D / ((p.b2 * p.c1 - p.b1 * p.c2) ** 2 * S * lam)
    if abs(direct - factored) > AGREE_RTOL * abs(factored):
        raise NumericalFailure(f"the two forms of d^({j}) disagree: {direct!r} vs {factored!r}")
    return factored


def mu_j(p: ModelParams, d: float, j: int) -> float:
    _, K, S = _numerator(p)
    lam = lambda_j(j)
    return (lam - K / (S * d)) / (lam + 1.0)


def constant_matrix(p: ModelParams, d: float) -> np.ndarray:
    """The 2x2 matrix whose eigenvalues are mu0^-(d), mu0^+(d)."""
    cs, K, S = _numerator(p)
    g, dl = p.gamma, p.delta
    u, v = cs.u_star, cs.v_star
    return np.array([
        [-K / d, ((g * p.b1 + dl * p.c1) * u - g * (g * p.b2 + dl * p.c2) * v) / d],
        [(p.b1 * u * u - p.c1 * cs.tau_star) / p.c1, (g * p.b1 + dl * p.c1) * u / p.c1],
    ]) / S


def constant_det(p: ModelParams, d: float) -> float:
    """Closed form of det M(d) = gamma u* v* (b1 c2 - b2 c1) / (c1 (delta u* + gamma v*) d).

    Only one power of ``delta u* + gamma v*`` survives the expansion; the sign,
    which is all the index needs, is that of ``b1 c2 - b2 c1``.
    """
    cs = constant_state(p)
    S = p.delta * cs.u_star + p.gamma * cs.v_star
    return p.gamma * cs.u_star * cs.v_star * (p.b1 * p.c2 - p.b2 * p.c1) / (p.c1 * S * d)


@dataclass(frozen=True)
class SpectralReport:
    d: float
    mu0_pair: tuple
    mu_seq: tuple
    sigma: int
    index: int


def _is_negative_real(z: complex) -> bool:
    return abs(z.imag) <= IMAG_TOL * max(1.0, abs(z.real)) and z.real < 0


def spectral_report(p: ModelParams, d: float, J_max: int = J_MAX) -> SpectralReport:
    regime = classify_regime(p)
    if not regime.is_competitive:
        raise RegimeError(f"degenerate regime: {regime.reason}")
    if not d > 0:
        raise DomainError("d must be positive")
    ev = np.linalg.eigvals(constant_matrix(p, d)).astype(complex)
    ev = sorted(ev, key=lambda z: (z.real, z.imag))
    pair = (complex(ev[0]), complex(ev[1]))
    seq = tuple(mu_j(p, d, j) for j in range(1, J_max + 1))
    sigma = sum(_is_negative_real(z) for z in pair) + sum(m < 0 for m in seq)
    return SpectralReport(float(d), pair, seq, int(sigma), -1 if sigma % 2 else 1)


def expected_index(p: ModelParams, d: float, J_max: int = J_MAX) -> int:
    """Index predicted by the regime / mode-interval table."""
    tag = classify_regime(p).tag
    if tag is RegimeTag.DEGENERATE:
        raise RegimeError("degenerate regime")
    j = sum(d < bifurcation_point(p, k) for k in range(1, J_max + 1))
    if tag is RegimeTag.WEAK:
        return -1 if j % 2 else 1
    return 1 if j % 2 else -1
