"""Selection of true solutions by the integral constraint and branch tracing in d.

For fixed ``(d, j)`` every ``tau`` in the admissible set carries a mode-j
profile (a root of ``X = 1/j``); the nonlocal constraint
``int_0^1 f(u, tau/u) dx = 0`` then singles out ``tau``.  The amplitude root
is tracked in the level coordinate of ``TimeMap`` so that profiles lingering
exponentially close to a saddle (small d) remain representable.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .bvp import Profile, reconstruct_profile
from .errors import (BracketError, ContinuationStall, DomainError, NoRootError, NumericalFailure,
                     QuadratureError, RegimeError, SignError, StateError)
from .levels import PotentialLevels
from .model import (ModelParams, RegimeTag, classify_regime, constant_state, f_along, g_along,
                    tau_bar, tau_tilde, zeros_of_h)
from .spectral import bifurcation_point
from .timemap import TimeMap

INT_TOL = 1e-8
ONSET_EPS = (1e-4, 2e-4, 4e-4, 7e-4, 1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.2)
D_MIN_FACTOR = 1e-4
N_GEOMETRIC = 28
KAPPA = 0.05
STALL_LIMIT = 3
PROFILE_NODES = 129
BALANCE_TOL = 1e-10
GAP_BISECTIONS = 6
MAX_BRACKET_EVALS = 60
# fraction of the usable level range beyond which a predicted orbit is not attempted
LAM_LIMIT = 0.97

_SOLVER_ERRORS = (NoRootError, DomainError, QuadratureError, BracketError, StateError)


class EndpointKind(enum.Enum):
    WEAK_POSITIVE = "WeakPositive"
    STRONG_ZERO = "StrongZero"
    UNRESOLVED = "Unresolved"


class SingularKind(enum.Enum):
    LEFT_STEP = "LeftStep"
    BALANCED = "Balanced"
    RIGHT_STEP = "RightStep"


@dataclass(frozen=True)
class BranchPoint:
    d: float
    tau: float
    m: float
    M: float
    j: int
    orientation: str
    amplitude: float
    int_f: float
    int_g: float
    lam: float
    profile: Profile | None = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class Endpoint:
    tau0: float
    kind: EndpointKind
    tau_last: float
    singular: SingularKind | None = None


@dataclass(frozen=True)
class Branch:
    j: int
    orientation: str
    points: tuple
    onset_d: float
    endpoint: Endpoint | None
    diagnostics: tuple = ()

    @property
    def d(self) -> np.ndarray:
        return np.array([pt.d for pt in self.points])

    @property
    def tau(self) -> np.ndarray:
        return np.array([pt.tau for pt in self.points])

    @property
    def amplitude(self) -> np.ndarray:
        return np.array([pt.amplitude for pt in self.points])


# ---------------------------------------------------------------------------
# constraint evaluation at fixed (tau, d, j)

@dataclass
class _Eval:
    tau: float
    lam: float
    int_f: float
    int_g: float
    tm: TimeMap
    orbit: object


def _solve_lam(tm: TimeMap, j: int, d: float, hint: float | None) -> float:
    """Root of X = 1/j in the level coordinate nearest to ``hint``.

    Walks outward from the hint with doubling steps until a sign change is
    found or both directions leave the usable range (a non-finite value marks
    the end of the range on that side).
    """
    target = 1.0 / j
    lo, hi = tm.lam_range()

    def F(lam):
        try:
            return tm.X_lam(lam, d) - target
        except (DomainError, QuadratureError):
            return math.nan

    hint = 0.0 if hint is None else min(max(hint, lo), hi)
    f0 = F(hint)
    if f0 == 0:
        return hint
    left = right = (hint, f0)
    step = 0.25
    if not math.isfinite(f0):
        roots = tm.solve_levels(j, d)
        return min(roots, key=lambda r: abs(r - hint))
    open_l = open_r = True
    while open_l or open_r:
        for side in (+1, -1):
            if not (open_r if side > 0 else open_l):
                continue
            a, fa = right if side > 0 else left
            b = min(max(hint + side * step, lo), hi)
            fb = F(b)
            if not math.isfinite(fb) or b in (lo, hi):
                if side > 0:
                    open_r = False
                else:
                    open_l = False
            if math.isfinite(fa) and math.isfinite(fb) and fa * fb <= 0:
                x0, x1 = (a, b) if a < b else (b, a)
                return brentq(F, x0, x1, xtol=1e-13, rtol=1e-15)
            if math.isfinite(fb):
                if side > 0:
                    right = (b, fb)
                else:
                    left = (b, fb)
        step *= 2.0
    raise NoRootError(f"X = 1/{j} has no root for tau={tm.tau!r}, d={d!r}")


def evaluate_constraint(tau: float, d: float, j: int, p: ModelParams, lam_hint: float | None = None,
                        order: int | None = None) -> _Eval:
    """int_f and int_g of the mode-j profile at (tau, d) (NoRootError if none)."""
    kw = {} if order is None else {"order": order}
    tm = TimeMap(tau, p, **kw)
    if tm.hu2 <= 0:
        raise NoRootError(f"degenerate centre at tau={tau!r}")
    lam = _solve_lam(tm, j, d, lam_hint)
    orbit = tm.half_orbit(tm.orbit_from_lam(lam))
    fi = j * tm.piece_integral(orbit, d, f_along(orbit.u, tau, p))
    gi = j * tm.piece_integral(orbit, d, g_along(orbit.u, tau, p))
    return _Eval(float(tau), float(lam), float(fi), float(gi), tm, orbit)


def _safe_eval(tau, d, j, p, hint):
    try:
        return evaluate_constraint(tau, d, j, p, hint)
    except _SOLVER_ERRORS:
        return None
    except NumericalFailure:
        return None


def _make_point(ev: _Eval, d: float, j: int, orientation: str, p: ModelParams,
                n_nodes: int | None) -> BranchPoint:
    orb = ev.orbit
    prof = None
    if n_nodes:
        prof = reconstruct_profile(j, "+", orb.orbit, ev.tau, d, p, n_nodes=n_nodes, timemap=ev.tm)
        if orientation == "-":
            prof = prof.shifted()
    return BranchPoint(float(d), ev.tau, float(orb.m), float(orb.M), j, orientation,
                       float(orb.span), ev.int_f, ev.int_g, ev.lam, prof)


def attach_profile(pt: BranchPoint, p: ModelParams, n_nodes: int = PROFILE_NODES) -> BranchPoint:
    """The same point with its sampled profile (recomputed from tau and lam)."""
    ev = evaluate_constraint(pt.tau, pt.d, pt.j, p, pt.lam)
    return _make_point(ev, pt.d, pt.j, pt.orientation, p, n_nodes)


def select_tau(d: float, j: int, p: ModelParams, tau_bracket, orientation: str = "+",
               lam_hint: float | None = None, n_nodes: int | None = PROFILE_NODES,
               method: str = "brent") -> BranchPoint:
    """Solve int_f(tau) = 0 inside ``tau_bracket`` for the mode-j profile at d.

    ``method="newton2d"`` instead runs Newton on (lam, tau) jointly from the
    bracket midpoint (experimental; no bracketing safeguard).
    """
    if not d > 0:
        raise DomainError("d must be positive")
    a, b = (float(t) for t in tau_bracket)
    if not a < b:
        raise DomainError(f"empty tau bracket ({a!r}, {b!r})")
    if method == "newton2d":
        ev = _newton2d(d, j, p, 0.5 * (a + b), lam_hint)
        return _make_point(ev, d, j, orientation, p, n_nodes)
    if method != "brent":
        raise DomainError(f"unknown method {method!r}")
    ea = evaluate_constraint(a, d, j, p, lam_hint)
    eb = evaluate_constraint(b, d, j, p, ea.lam)
    if ea.int_f == 0:
        return _make_point(ea, d, j, orientation, p, n_nodes)
    if eb.int_f == 0:
        return _make_point(eb, d, j, orientation, p, n_nodes)
    if ea.int_f * eb.int_f > 0:
        raise BracketError(f"int_f has the same sign at tau={a!r} and tau={b!r}")
    return _refine(ea, eb, d, j, p, orientation, n_nodes)


def _refine(ea: _Eval, eb: _Eval, d, j, p, orientation, n_nodes) -> BranchPoint:
    state = {"hint": 0.5 * (ea.lam + eb.lam), "last": None}

    def F(tau):
        ev = evaluate_constraint(tau, d, j, p, state["hint"])
        state["hint"], state["last"] = ev.lam, ev
        return ev.int_f

    tau = brentq(F, ea.tau, eb.tau, xtol=1e-300, rtol=1e-15, maxiter=200)
    ev = state["last"] if state["last"] is not None and state["last"].tau == tau else \
        evaluate_constraint(tau, d, j, p, state["hint"])
    return _make_point(ev, d, j, orientation, p, n_nodes)


def _newton2d(d, j, p, tau, lam, max_iter: int = 30):
    """Newton on (X(lam, tau) - 1/j, int_f(lam, tau)) with difference Jacobian."""
    if lam is None:
        lam = TimeMap(tau, p).solve_levels(j, d)[0]

    def G(lam, tau):
        tm = TimeMap(tau, p)
        orb = tm.half_orbit(tm.orbit_from_lam(lam))
        return np.array([tm.piece_integral(orb, d) - 1.0 / j,
                         j * tm.piece_integral(orb, d, f_along(orb.u, tau, p))])

    for _ in range(max_iter):
        g0 = G(lam, tau)
        if np.all(np.abs(g0) < 1e-13):
            break
        hl, ht = 1e-6 * max(1.0, abs(lam)), 1e-7 * tau
        J = np.column_stack([(G(lam + hl, tau) - g0) / hl, (G(lam, tau + ht) - g0) / ht])
        dl, dt = np.linalg.solve(J, -g0)
        lam, tau = lam + dl, tau + dt
    else:
        raise NumericalFailure("two-dimensional Newton did not converge")
    return evaluate_constraint(tau, d, j, p, lam)


# ---------------------------------------------------------------------------
# bracket search

def _find_bracket(d, j, p, centre, width, hint, tau_hi, max_doublings: int = 40,
                  max_evals: int = MAX_BRACKET_EVALS):
    """Evaluate int_f outward from ``centre`` until two neighbours change sign.

    Offsets grow geometrically from ``width`` on both sides.  Returns the pair
    of evaluations closest to the centre.
    """
    seen = {}

    def ev(t):
        if t not in seen:
            if len(seen) >= max_evals:
                raise BracketError(f"no sign change of int_f in {max_evals} evaluations "
                                   f"near tau={centre!r} at d={d!r}")
            seen[t] = _safe_eval(t, d, j, p, hint)
        return seen[t]

    def check():
        pts = sorted((t, e) for t, e in seen.items() if e is not None)
        best = None
        for (t0, e0), (t1, e1) in zip(pts, pts[1:]):
            # neighbours must be adjacent among all evaluated points, valid or not
            if any(t0 < t < t1 for t in seen):
                continue
            if e0.int_f * e1.int_f <= 0:
                dist = min(abs(t0 - centre), abs(t1 - centre))
                if best is None or dist < best[0]:
                    best = (dist, e0, e1)
        return best

    def fill_gaps():
        # a failed evaluation next to a valid one may hide the root: halve that gap
        ts = sorted(seen)
        for t0, t1 in zip(ts, ts[1:]):
            if (seen[t0] is None) != (seen[t1] is None):
                ev(0.5 * (t0 + t1))

    ev(centre)
    off = width
    for _ in range(max_doublings):
        for s in (-1, 1):
            t = centre + s * off
            if 0 < t <= tau_hi:
                ev(t)
        found = check()
        for _ in range(GAP_BISECTIONS):
            if found is not None:
                break
            before = len(seen)
            fill_gaps()
            if len(seen) == before:
                break
            found = check()
        if found is not None:
            return found[1], found[2]
        off *= 2.0
        if off > centre and off > tau_hi - centre:
            break
    raise BracketError(f"no sign change of int_f near tau={centre!r} at d={d!r}")


def _first_bracket(d, j, p, tau_star, tau_hi):
    """Scan outward from tau* with offsets spanning many decades (onset of the branch).

    Offsets are visited in increasing order, so the first sign change found is
    the one nearest to tau*.
    """
    offs = KAPPA * tau_star * np.geomspace(1e-7, 1.0, 29)
    prev = {-1: (tau_star, _safe_eval(tau_star, d, j, p, None))}
    prev[1] = prev[-1]
    for off in offs:
        for s in (-1, 1):
            t = float(tau_star + s * off)
            if not 0 < t <= tau_hi:
                continue
            e = _safe_eval(t, d, j, p, None)
            t0, e0 = prev[s]
            prev[s] = (t, e)
            if e is not None and e0 is not None and e0.int_f * e.int_f <= 0:
                return (e0, e) if t0 < t else (e, e0)
    raise BracketError(f"no sign change of int_f within {KAPPA} tau* of tau* at d={d!r}")


# ---------------------------------------------------------------------------
# tracing

def default_d_grid(p: ModelParams, j: int, d_min: float | None = None,
                   n_geometric: int = N_GEOMETRIC) -> np.ndarray:
    dj = bifurcation_point(p, j)
    d_min = D_MIN_FACTOR * dj if d_min is None else d_min
    onset = dj * (1.0 - np.array(ONSET_EPS))
    tail = np.geomspace(onset[-1], d_min, n_geometric + 1)[1:]
    return np.concatenate([onset, tail])


def _predict(points, d):
    """Linear extrapolation of (tau, lam) in log d from the last two points."""
    if len(points) == 1:
        return points[-1].tau, points[-1].lam, None
    a, b = points[-2], points[-1]
    s = (math.log(d) - math.log(b.d)) / (math.log(b.d) - math.log(a.d))
    tau = b.tau + s * (b.tau - a.tau)
    lam = b.lam + s * (b.lam - a.lam)
    return tau, lam, abs(b.tau - a.tau) * max(abs(s), 1e-3)


def trace_branch(j: int, orientation: str, p: ModelParams, d_grid=None,
                 n_nodes: int | None = PROFILE_NODES, raise_on_stall: bool = False,
                 classify_endpoint: bool = True) -> Branch:
    """Follow the mode-j branch from its onset at d^(j) down the grid of d."""
    if orientation not in ("+", "-"):
        raise DomainError(f"orientation must be '+' or '-', got {orientation!r}")
    regime = classify_regime(p)
    if not regime.is_competitive:
        raise RegimeError(regime.reason)
    dj = bifurcation_point(p, j)
    grid = default_d_grid(p, j) if d_grid is None else np.asarray(d_grid, dtype=float)
    if np.any(np.diff(grid) >= 0):
        raise DomainError("d_grid must be strictly decreasing")
    if grid[0] >= dj:
        raise DomainError(f"d_grid must start below d^({j}) = {dj!r}")
    tau_star = constant_state(p).tau_star
    tau_hi = tau_bar(p)
    points, diag = [], []
    fails = 0
    for d in grid:
        d = float(d)
        try:
            if not points:
                ea, eb = _first_bracket(d, j, p, tau_star, tau_hi)
            else:
                centre, hint, width = _predict(points, d)
                lam_max = LAM_LIMIT * TimeMap(points[-1].tau, p).lam_range()[1]
                if hint is not None and hint > lam_max:
                    raise NumericalFailure(f"predicted level coordinate {hint:.1f} beyond the "
                                           f"resolvable range ({lam_max:.1f})")
                centre = min(max(centre, 1e-300), tau_hi)
                if width is None:
                    # one point so far: its distance from tau* sets the pitchfork scale
                    width = abs(points[-1].tau - tau_star)
                width = max(width, 1e-9 * tau_star)
                ea, eb = _find_bracket(d, j, p, centre, width, hint, tau_hi)
            pt = _refine(ea, eb, d, j, p, orientation, n_nodes)
            if pt.tau > tau_hi:
                raise NumericalFailure(f"tau={pt.tau!r} above tau_bar")
            if not abs(pt.int_f) <= INT_TOL:
                # int_f jumps across tau: the root is below the resolution of tau itself
                raise NumericalFailure(f"|int_f| = {abs(pt.int_f):.3e} above {INT_TOL:g} "
                                       f"at tau={pt.tau!r}")
        except (NumericalFailure, DomainError, StateError) as exc:
            fails += 1
            diag.append(f"d={d:.6g}: {type(exc).__name__}: {exc}")
            if fails >= STALL_LIMIT:
                msg = f"{STALL_LIMIT} consecutive failures; branch truncated at d={d:.6g}"
                diag.append(msg)
                if raise_on_stall:
                    raise ContinuationStall(msg) from exc
                break
            continue
        fails = 0
        points.append(pt)
    onset = fit_onset(points) if len(points) >= 2 else math.nan
    endpoint = classify_branch_endpoint(points, p) if (classify_endpoint and points) else None
    return Branch(j, orientation, tuple(points), onset, endpoint, tuple(diag))


def shift_branch(branch: Branch) -> Branch:
    """The branch of the opposite orientation (profiles translated by 1/j)."""
    other = "-" if branch.orientation == "+" else "+"
    pts = tuple(replace(pt, orientation=other,
                        profile=pt.profile.shifted() if pt.profile is not None else None)
                for pt in branch.points)
    return replace(branch, orientation=other, points=pts)


def fit_onset(points, n_fit: int = 5) -> float:
    """d at which amplitude^2, fitted linearly in d, vanishes."""
    pts = sorted(points, key=lambda pt: pt.amplitude)[:n_fit]
    if len(pts) < 2:
        return math.nan
    d = np.array([pt.d for pt in pts])
    a2 = np.array([pt.amplitude for pt in pts]) ** 2
    slope, icpt = np.polyfit(d, a2, 1)
    return float(-icpt / slope)


# ---------------------------------------------------------------------------
# singular limits

@dataclass(frozen=True)
class SingularLimit:
    kind: SingularKind
    tau: float
    z1: float
    z2: float
    z3: float
    H1: float
    H3: float
    eta: float | None = None
    zeta: float | None = None


def classify_singular_limit(tau: float, p: ModelParams) -> SingularLimit:
    """Compare H(z1) with H(z3) and locate the level-matching point."""
    tm = TimeMap(tau, p)
    lv = tm.lv
    diff = float(lv.level[0, 2])           # H(z3) - H(z1)
    scale = max(abs(tm.H1), abs(tm.H3), 1e-300)
    eta = zeta = None
    if abs(diff) <= BALANCE_TOL * scale:
        kind = SingularKind.BALANCED
        eta, zeta = tm.z3, tm.z1
    elif diff > 0:
        kind = SingularKind.LEFT_STEP
        # eta in (z2, z3) with H(eta) = H(z1)
        k, dM = tm._M_side(0, 0.0)
        eta = lv.point(k, dM)
    else:
        kind = SingularKind.RIGHT_STEP
        k, dm = tm._m_side(2, 0.0)
        zeta = lv.point(k, dm)
    return SingularLimit(kind, float(tau), tm.z1, tm.z2, tm.z3, tm.H1, tm.H3, eta, zeta)


def _balance(tau, p):
    z = zeros_of_h(tau, p)
    if not z.complete:
        return None
    return float(PotentialLevels(tau, p, z).level[0, 2])


def solve_balance(p: ModelParams, n_scan: int = 400, xtol: float = 1e-14):
    """All tau in (tau_tilde, tau_bar) with H(z1) = H(z3), located by bisection."""
    lo, hi = tau_tilde(p), tau_bar(p)
    if not hi > lo:
        raise BracketError("the interval (tau_tilde, tau_bar) is empty")
    grid = np.linspace(lo, hi, n_scan + 2)[1:-1]
    vals = [_balance(float(t), p) for t in grid]
    roots = []
    for k in range(len(grid) - 1):
        a, b = vals[k], vals[k + 1]
        if a is None or b is None or a * b > 0:
            continue
        ta, tb = float(grid[k]), float(grid[k + 1])
        sa = math.copysign(1.0, a)
        while tb - ta > xtol * max(1.0, tb):
            mid = 0.5 * (ta + tb)
            vm = _balance(mid, p)
            if vm is None:
                break
            if math.copysign(1.0, vm) == sa:
                ta = mid
            else:
                tb = mid
        roots.append(0.5 * (ta + tb))
    if not roots:
        raise BracketError("H(z3) - H(z1) does not change sign on (tau_tilde, tau_bar)")
    return roots


def interface_fraction(tau0: float, p: ModelParams) -> float:
    """l in (0, 1) with l f(z1) + (1 - l) f(z3) = 0."""
    z = zeros_of_h(tau0, p)
    z.require_complete()
    f1 = float(f_along(z.z1, tau0, p))
    f3 = float(f_along(z.z3, tau0, p))
    if f1 * f3 > 0:
        raise SignError(f"f(z1) = {f1!r} and f(z3) = {f3!r} share a sign: no interface balance")
    if f1 == f3:
        raise DomainError("f(z1) = f(z3) = 0: every l balances")
    return f3 / (f3 - f1)


def interface_balance_check(tau0: float, ell: float | None, p: ModelParams) -> float:
    """Residual l f(z1) + (1 - l) f(z3); with ``ell=None`` l is solved for first."""
    if ell is None:
        ell = interface_fraction(tau0, p)
    if not 0 < ell < 1:
        raise DomainError(f"l={ell!r} outside (0, 1)")
    z = zeros_of_h(tau0, p)
    z.require_complete()
    return float(ell * f_along(z.z1, tau0, p) + (1 - ell) * f_along(z.z3, tau0, p))


def classify_branch_endpoint(points, p: ModelParams, n_trend: int = 4) -> Endpoint:
    """Singular-limit kind read off the tail of a traced branch."""
    tag = classify_regime(p).tag
    taus = [pt.tau for pt in points]
    last = taus[-1]
    tail = taus[-n_trend:]
    try:
        singular = classify_singular_limit(last, p).kind
    except NumericalFailure:
        singular = None
    tau_star = constant_state(p).tau_star
    if tag is RegimeTag.STRONG:
        decreasing = len(tail) >= 2 and all(b < a for a, b in zip(tail, tail[1:]))
        if decreasing and last < 0.5 * tau_star:
            return Endpoint(0.0, EndpointKind.STRONG_ZERO, last, singular)
        return Endpoint(math.nan, EndpointKind.UNRESOLVED, last, singular)
    try:
        roots = solve_balance(p)
    except BracketError:
        return Endpoint(math.nan, EndpointKind.UNRESOLVED, last, singular)
    tau0 = min(roots, key=lambda r: abs(r - last))
    first = taus[0]
    if abs(last - tau0) < abs(first - tau0) and abs(last - tau0) < 0.05 * tau0:
        return Endpoint(tau0, EndpointKind.WEAK_POSITIVE, last, singular)
    return Endpoint(tau0, EndpointKind.UNRESOLVED, last, singular)


# ---------------------------------------------------------------------------
# serialization

BRANCH_HEADER = ["j", "orientation", "d", "tau", "m", "amplitude", "int_f", "int_g"]


def write_branch_csv(branch: Branch, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(BRANCH_HEADER)
        for pt in branch.points:
            wr.writerow([pt.j, pt.orientation] + [f"{v:.17g}" for v in
                        (pt.d, pt.tau, pt.m, pt.amplitude, pt.int_f, pt.int_g)])


def read_branch_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (v if k == "orientation" else (int(v) if k == "j" else float(v)))
             for k, v in row.items()} for row in rows]


def branch_manifest(branches, files=None) -> dict:
    out = []
    for k, br in enumerate(branches):
        ep = br.endpoint
        out.append({
            "j": br.j,
            "orientation": br.orientation,
            "file": None if files is None else str(files[k]),
            "n_points": len(br.points),
            "onset_d": br.onset_d,
            "endpoint": None if ep is None else {
                "tau0": ep.tau0, "kind": ep.kind.value, "tau_last": ep.tau_last,
                "singular_limit": None if ep.singular is None else ep.singular.value},
            "diagnostics": list(br.diagnostics),
        })
    return {"branches": out}


def write_manifest(branches, path, files=None):
    with open(path, "w") as fh:
        json.dump(branch_manifest(branches, files), fh, indent=2, allow_nan=True)
