"""Finite-difference Newton solver for the 1-D steady cross-diffusion system

    [(d1 + alpha v) u]'' + f(u, v) = 0,   [(d2 + beta u) v]'' + g(u, v) = 0

on (0, 1) with Neumann conditions.  In the unknowns ``U = (d1 + alpha v) u``
and ``V = (d2 + beta u) v`` both diffusion terms are plain second
differences; (u, v) is recovered from (U, V) pointwise by solving a
quadratic.  As ``alpha = gamma * beta -> infinity`` solutions approach those
of the limiting system with ``d = d2`` and ``delta = d1 / d2``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .errors import DomainError, NegativeDensity, NewtonDivergence
from .model import ModelParams, constant_state, reaction_f, reaction_g

DEFAULT_N = 400
RES_TOL = 1e-12
MAX_ITER = 60
ARMIJO = 1e-4
CLIP = 0.9
MIN_STEP = 1e-10


@dataclass(frozen=True)
class SktParams:
    model: ModelParams
    d1: float
    d2: float
    alpha: float
    beta: float
    N: int = DEFAULT_N

    def __post_init__(self):
        for name in ("d1", "d2", "alpha", "beta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be positive, got {v!r}")
        if int(self.N) != self.N or self.N < 4:
            raise DomainError(f"grid size N must be an integer >= 4, got {self.N!r}")
        if abs(self.d1 / self.d2 - self.model.delta) > 1e-12 * self.model.delta:
            raise DomainError(f"d1/d2 = {self.d1 / self.d2!r} differs from delta = {self.model.delta!r}")
        if abs(self.alpha / self.beta - self.model.gamma) > 1e-12 * self.model.gamma:
            raise DomainError(f"alpha/beta = {self.alpha / self.beta!r} differs from "
                              f"gamma = {self.model.gamma!r}")

    @classmethod
    def from_limit(cls, p: ModelParams, d: float, beta: float, N: int = DEFAULT_N) -> "SktParams":
        """Full-system parameters whose limit beta -> infinity has diffusion d."""
        return cls(p, p.delta * d, d, p.gamma * beta, beta, N)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.N + 1)

    @property
    def h(self) -> float:
        return 1.0 / self.N


@dataclass(frozen=True)
class SktSolution:
    x: np.ndarray
    u: np.ndarray
    v: np.ndarray
    residual: float
    iterations: int = 0
    history: tuple = field(default=(), repr=False)

    @property
    def uv(self) -> np.ndarray:
        return self.u * self.v

    def w(self, p: ModelParams, tau: float | None = None) -> np.ndarray:
        """delta u - gamma tau/u, with tau the mean product unless given."""
        t = float(np.mean(self.uv)) if tau is None else tau
        return p.delta * self.u - p.gamma * t / self.u


def neumann_laplacian(N: int) -> sps.csr_matrix:
    """Second differences on N+1 nodes of [0, 1] with mirrored ghost points."""
    h2 = float(N) ** 2
    main = np.full(N + 1, -2.0)
    up = np.ones(N)
    lo = np.ones(N)
    up[0] = 2.0
    lo[-1] = 2.0
    return sps.diags([lo, main, up], [-1, 0, 1], format="csr") * h2


def to_transformed(sp: SktParams, u, v):
    return (sp.d1 + sp.alpha * v) * u, (sp.d2 + sp.beta * u) * v


def from_transformed(sp: SktParams, U, V):
    """Pointwise inverse of (u, v) -> (U, V) on the positive cone.

    Eliminating u leaves ``alpha d2 v^2 + B v - d1 V = 0`` with
    ``B = d1 d2 + beta U - alpha V``; its positive root is taken in the
    cancellation-free form.
    """
    a = sp.alpha * sp.d2
    B = sp.d1 * sp.d2 + sp.beta * U - sp.alpha * V
    c = sp.d1 * V
    disc = np.sqrt(B * B + 4.0 * a * c)
    v = np.where(B > 0, 2.0 * c / (B + disc), (disc - B) / (2.0 * a))
    u = U / (sp.d1 + sp.alpha * v)
    return u, v


def _reaction_jac(p: ModelParams, u, v):
    fu = p.a1 - 2 * p.b1 * u - p.c1 * v
    fv = -p.c1 * u
    gu = -p.b2 * v
    gv = p.a2 - p.b2 * u - 2 * p.c2 * v
    return fu, fv, gu, gv


def _residual(sp, L, U, V):
    u, v = from_transformed(sp, U, V)
    p = sp.model
    return np.concatenate([L @ U + reaction_f(u, v, p), L @ V + reaction_g(u, v, p)]), u, v


def _jacobian_transformed(sp, L, u, v):
    p = sp.model
    fu, fv, gu, gv = _reaction_jac(p, u, v)
    # d(u, v)/d(U, V) is the inverse of d(U, V)/d(u, v)
    A11 = sp.d1 + sp.alpha * v
    A12 = sp.alpha * u
    A21 = sp.beta * v
    A22 = sp.d2 + sp.beta * u
    det = A11 * A22 - A12 * A21
    i11, i12, i21, i22 = A22 / det, -A12 / det, -A21 / det, A11 / det
    D = sps.diags
    return sps.bmat([
        [L + D(fu * i11 + fv * i21), D(fu * i12 + fv * i22)],
        [D(gu * i11 + gv * i21), L + D(gu * i12 + gv * i22)],
    ], format="csc")


def _scale(sp, U, V, u, v):
    """Natural size of the terms balanced in the equations.

    The second differences of U and V are evaluated with rounding errors of
    order eps * |U| N^2, which sets the attainable residual.
    """
    p = sp.model
    react = max(float(np.max(np.abs(p.a1 * u))), float(np.max(np.abs(p.a2 * v))), 1.0)
    return max(float(np.max(np.abs(U))), float(np.max(np.abs(V)))) * sp.N ** 2 + react


def _positive_step(x, dx):
    neg = dx < 0
    if not np.any(neg):
        return 1.0
    return min(1.0, CLIP * float(np.min(-x[neg] / dx[neg])))


def solve_skt(sp: SktParams, initial_guess, method: str = "transformed", tol: float = RES_TOL,
              max_iter: int = MAX_ITER) -> SktSolution:
    """Damped Newton from ``initial_guess`` (an SktSolution or a pair of arrays (u, v))."""
    if isinstance(initial_guess, SktSolution):
        u0, v0 = initial_guess.u, initial_guess.v
    else:
        u0, v0 = initial_guess
    u0 = np.asarray(u0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if u0.shape != (sp.N + 1,) or v0.shape != (sp.N + 1,):
        raise DomainError(f"initial guess must have N+1 = {sp.N + 1} samples")
    if np.any(u0 <= 0) or np.any(v0 <= 0):
        raise DomainError("initial guess must be positive")
    if method == "direct":
        return _solve_direct(sp, u0, v0, tol, max_iter)
    if method != "transformed":
        raise DomainError(f"unknown method {method!r}")
    L = neumann_laplacian(sp.N)
    n = sp.N + 1
    U, V = to_transformed(sp, u0, v0)
    X = np.concatenate([U, V])
    F, u, v = _residual(sp, L, U, V)
    norm = float(np.max(np.abs(F)))
    scale = _scale(sp, U, V, u, v)
    history = [(norm, 1.0)]
    for it in range(1, max_iter + 1):
        if norm <= tol * scale:
            # one undamped polishing step, kept only if it helps
            dX = spla.spsolve(_jacobian_transformed(sp, L, u, v), -F)
            Xn = X + dX
            if np.all(Xn > 0):
                Fn, un, vn = _residual(sp, L, Xn[:n], Xn[n:])
                if float(np.max(np.abs(Fn))) < norm:
                    u, v, norm = un, vn, float(np.max(np.abs(Fn)))
                    history.append((norm, 1.0))
            return SktSolution(sp.x, u, v, norm, it - 1, tuple(history))
        J = _jacobian_transformed(sp, L, u, v)
        dX = spla.spsolve(J, -F)
        if not np.all(np.isfinite(dX)):
            raise NewtonDivergence("singular Jacobian", history)
        s = _positive_step(X, dX)
        if s < MIN_STEP:
            raise NegativeDensity(f"positivity clipping shrank the step to {s:.3e}")
        merit = 0.5 * float(F @ F)
        while True:
            Xn = X + s * dX
            Fn, un, vn = _residual(sp, L, Xn[:n], Xn[n:])
            if 0.5 * float(Fn @ Fn) <= (1.0 - 2 * ARMIJO * s) * merit or \
                    float(np.max(np.abs(Fn))) <= tol * scale:
                break
            s *= 0.5
            if s < MIN_STEP:
                raise NewtonDivergence(f"line search failed at iteration {it}", history)
        X, F, u, v = Xn, Fn, un, vn
        norm = float(np.max(np.abs(F)))
        history.append((norm, s))
    if norm <= tol * scale:
        return SktSolution(sp.x, u, v, norm, max_iter, tuple(history))
    raise NewtonDivergence(f"no convergence in {max_iter} iterations (residual {norm:.3e})", history)


def _solve_direct(sp, u, v, tol, max_iter):
    """Newton in (u, v) itself; kept to cross-check the transformed formulation."""
    p = sp.model
    L = neumann_laplacian(sp.N)
    D = sps.diags

    def resid(u, v):
        U, V = to_transformed(sp, u, v)
        return np.concatenate([L @ U + reaction_f(u, v, p), L @ V + reaction_g(u, v, p)])

    n = sp.N + 1
    X = np.concatenate([u, v])
    F = resid(u, v)
    norm = float(np.max(np.abs(F)))
    scale = _scale(sp, *to_transformed(sp, u, v), u, v)
    history = [(norm, 1.0)]
    for it in range(1, max_iter + 1):
        if norm <= tol * scale:
            return SktSolution(sp.x, u, v, norm, it - 1, tuple(history))
        fu, fv, gu, gv = _reaction_jac(p, u, v)
        J = sps.bmat([
            [L @ D(sp.d1 + sp.alpha * v) + D(fu), L @ D(sp.alpha * u) + D(fv)],
            [L @ D(sp.beta * v) + D(gu), L @ D(sp.d2 + sp.beta * u) + D(gv)],
        ], format="csc")
        dX = spla.spsolve(J, -F)
        s = _positive_step(X, dX)
        if s < MIN_STEP:
            raise NegativeDensity(f"positivity clipping shrank the step to {s:.3e}")
        merit = 0.5 * float(F @ F)
        while True:
            Xn = X + s * dX
            Fn = resid(Xn[:n], Xn[n:])
            if 0.5 * float(Fn @ Fn) <= (1.0 - 2 * ARMIJO * s) * merit:
                break
            s *= 0.5
            if s < MIN_STEP:
                raise NewtonDivergence(f"line search failed at iteration {it}", history)
        X, F = Xn, Fn
        u, v = X[:n], X[n:]
        norm = float(np.max(np.abs(F)))
        history.append((norm, s))
    if norm <= tol * scale:
        return SktSolution(sp.x, u, v, norm, max_iter, tuple(history))
    raise NewtonDivergence(f"no convergence in {max_iter} iterations (residual {norm:.3e})", history)


# ---------------------------------------------------------------------------
# initial guesses and comparison with the limiting system

def constant_guess(sp: SktParams, j: int = 0, amplitude: float = 0.0):
    """(u*, v*) perturbed by ``amplitude * cos(j pi x)`` in u (v opposite)."""
    cs = constant_state(sp.model)
    x = sp.x
    pert = amplitude * np.cos(j * math.pi * x)
    return cs.u_star * (1.0 + pert), cs.v_star * (1.0 - pert)


def guess_from_profile(sp: SktParams, profile):
    """Limiting profile (u, tau/u) resampled onto the finite-difference grid."""
    u = np.interp(sp.x, profile.x, profile.u)
    return u, profile.tau / u


def compare_with_limit(sol: SktSolution, bp, p: ModelParams | None = None) -> dict:
    """Distances between a full-system solution and a limiting BranchPoint / Profile."""
    prof = getattr(bp, "profile", bp)
    if prof is None:
        raise DomainError("the branch point carries no profile")
    p = p if p is not None else prof.params
    tau = prof.tau
    u_lim = np.interp(sol.x, prof.x, prof.u)
    w_lim = p.delta * u_lim - p.gamma * tau / u_lim
    w = p.delta * sol.u - p.gamma * tau / sol.u
    return {
        "sup_uv_minus_tau": float(np.max(np.abs(sol.uv - tau))),
        "sup_u_distance": float(np.max(np.abs(sol.u - u_lim))),
        "sup_w_deviation": float(np.max(np.abs(w - w_lim))),
        "tau": float(tau),
        "residual": float(sol.residual),
    }


def discrete_constraint(sol: SktSolution, p: ModelParams) -> float:
    """Trapezoidal mean of f(u, v); zero for an exact discrete solution."""
    f = reaction_f(sol.u, sol.v, p)
    return float(np.trapezoid(f, sol.x)) if hasattr(np, "trapezoid") else float(np.trapz(f, sol.x))


def write_solution_csv(sol: SktSolution, p: ModelParams, path, sp: SktParams | None = None):
    w = sol.w(p)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x", "u", "v", "uv", "w"])
        for row in zip(sol.x, sol.u, sol.v, sol.uv, w):
            wr.writerow([f"{val:.17g}" for val in row])
    if sp is not None:
        meta = {"model": sp.model.as_dict(), "d1": sp.d1, "d2": sp.d2, "alpha": sp.alpha,
                "beta": sp.beta, "N": sp.N, "residual": sol.residual,
                "iterations": sol.iterations}
        with open(str(path) + ".json", "w") as fh:
            json.dump(meta, fh, indent=2)
