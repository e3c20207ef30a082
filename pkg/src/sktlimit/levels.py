"""Potential differences measured from the critical points of H.

Near a saddle of ``H`` (a zero z1 or z3 of h) the energy of an orbit differs
from the saddle level by a quantity that shrinks like the square of the
distance to the saddle.  Plain differences of the closed-form antiderivative
lose that quantity to rounding long before the orbits of interest are
reached.  Here every point is carried as an exact offset from a zero, the
integrand ``P = h * (delta + gamma*tau/u^2)`` is evaluated in factored form

    P(y) = -b1 (y - Z1)(y - Z2)(y - Z3)(y - Z4) (delta y^2 + gamma tau) / y^4

with the factors built from those offsets, and integrals are taken in the
log variable ``y = base * exp(r)``.  The level differences ``H(Zk) - H(Zi)``
between zeros are evaluated once in decimal arithmetic.
"""

from __future__ import annotations

import decimal
import math

import numpy as np

from .errors import DomainError
from .model import ModelParams, ZeroTriple, zeros_of_h
from .quadrature import gauss_legendre

DECIMAL_DIGITS = 60
INNER_ORDER = 20
R_PANEL = 1.0
TINY_LEVEL = 1e-280

_D = decimal.Decimal


def _gl01(n: int):
    x, w = gauss_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


class PotentialLevels:
    """Accurate H-differences for fixed ``tau`` (zeros indexed 1, 2, 3)."""

    def __init__(self, tau: float, p: ModelParams, zeros: ZeroTriple | None = None):
        z = zeros if zeros is not None else zeros_of_h(tau, p)
        z.require_complete()
        self.tau = float(tau)
        self.p = p
        self.gt = p.gamma * self.tau
        with decimal.localcontext() as ctx:
            ctx.prec = DECIMAL_DIGITS
            Z = [self._polish(_D(float(v)), ctx) for v in z.zeros]
            c = self._quartic_coeffs_dec()
            # product of the four roots is c0 / c4
            Z4 = c[4] / (c[0] * Z[0] * Z[1] * Z[2])
            F = [self._antiderivative(v) for v in Z]
            self.hi = np.array([float(v) for v in Z])
            self.lo = np.array([float(v - _D(float(v))) for v in Z])
            self.z4 = float(Z4)
            # gap[i, k] = Zi - Zk ; level[i, k] = H(Zk) - H(Zi)
            self.gap = np.array([[float(a - b) for b in Z] for a in Z])
            self.level = np.array([[float(fk - fi) for fk in F] for fi in F])
        self.slope = np.array([self.dP(k) for k in range(3)])

    # ------------------------------------------------------------ decimal part
    def _quartic_coeffs_dec(self):
        p = self.p
        g, tau = _D(p.gamma), _D(self.tau)
        return [-_D(p.b1), _D(p.a1), tau * (g * _D(p.b2) - _D(p.c1)), -g * _D(p.a2) * tau,
                g * _D(p.c2) * tau * tau]

    def _quartic_dec(self, u):
        c = self._quartic_coeffs_dec()
        val = _D(0)
        der = _D(0)
        for a in c:
            der = der * u + val
            val = val * u + a
        return val, der

    def _polish(self, u, ctx):
        for _ in range(12):
            val, der = self._quartic_dec(u)
            if der == 0:
                break
            step = val / der
            u -= step
            if abs(step) <= abs(u) * _D(10) ** (-(ctx.prec - 3)):
                break
        return u

    def _antiderivative(self, s):
        p = self.p
        D = lambda v: _D(float(v))
        g, dl, tau = D(p.gamma), D(p.delta), D(self.tau)
        a1, a2, b1, b2, c1, c2 = (D(v) for v in (p.a1, p.a2, p.b1, p.b2, p.c1, p.c2))
        k = (g * b2 - c1) * tau
        k2, k1, k0 = -dl * b1, dl * a1, dl * k - g * tau * b1
        e1 = g * tau * (a1 - dl * a2)
        e2 = g * tau * (dl * c2 * tau + k)
        e3 = -g * g * a2 * tau * tau
        e4 = g * g * c2 * tau ** 3
        r = 1 / s
        return (k2 * s ** 3 / 3 + k1 * s * s / 2 + k0 * s + e1 * s.ln()
                - e2 * r - e3 * r * r / 2 - e4 * r ** 3 / 3)

    # ------------------------------------------------------------- float part
    def P_times_y(self, y, d1, d2, d3):
        """y * P(y) given the offsets y - Zi."""
        p = self.p
        return (-p.b1 * d1 * d2 * d3 * (y - self.z4) * (p.delta * y * y + self.gt)) / (y * y * y)

    def P_at(self, base, offs):
        """P(base) given the three offsets base - Zi."""
        return self.P_times_y(base, *offs) / base

    def dP(self, k: int) -> float:
        """P'(Zk), which equals h_u(Zk) * weight(Zk)."""
        y = self.hi[k]
        offs = [self.gap[k, i] for i in range(3)]
        prod = -self.p.b1 * (y - self.z4) * (self.p.delta * y * y + self.gt) / y ** 4
        for i in range(3):
            if i != k:
                prod *= offs[i]
        return float(prod)

    def integral(self, base: float, offs, R):
        """int_base^{base*exp(R)} P(y) dy for an array of R (either sign)."""
        R = np.atleast_1d(np.asarray(R, dtype=float))
        if R.size == 0:
            return R.copy()
        n_pan = max(1, int(math.ceil(float(np.max(np.abs(R))) / R_PANEL)))
        t, w = _gl01(INNER_ORDER)
        frac = ((np.arange(n_pan)[:, None] + t[None, :]) / n_pan).ravel()
        wt = np.tile(w, n_pan) / n_pan
        r = R[:, None] * frac[None, :]
        em = base * np.expm1(r)
        y = base + em
        vals = self.P_times_y(y, offs[0] + em, offs[1] + em, offs[2] + em)
        return (vals @ wt) * R

    def offsets_from(self, k: int, delta: float):
        """Offsets (Zk + delta) - Zi, i = 1..3."""
        return np.array([self.gap[k, i] + delta if i != k else delta for i in range(3)])

    def point(self, k: int, delta: float) -> float:
        return float(self.hi[k] + (self.lo[k] + delta))

    def local(self, k: int, delta: float) -> float:
        """H(Zk + delta) - H(Zk)."""
        if delta == 0:
            return 0.0
        base = self.hi[k]
        R = math.log1p(delta / base)
        offs = np.array([self.gap[k, i] for i in range(3)])
        return float(self.integral(base, offs, [R])[0])

    def invert_local(self, k: int, side: int, target: float, span: float) -> float:
        """delta with sign ``side``, |delta| <= span and H(Zk + delta) - H(Zk) = target."""
        if target == 0:
            return 0.0
        edge = self.local(k, side * span)
        if target * edge < 0:
            raise DomainError(f"level {target!r} has the wrong sign next to zero {k + 1}")
        if abs(target) >= abs(edge):
            if abs(target) <= abs(edge) * (1 + 1e-13):
                return side * span
            raise DomainError(f"level {target!r} not attained within {span!r} of zero {k + 1}")
        # the local integral grows like |P'(Zk)| delta^2 / 2; solve in log|delta|
        guess = math.sqrt(2.0 * abs(target) / abs(self.slope[k]))
        guess = min(max(guess, 1e-300), span)
        lt = math.log(abs(target))
        offs = np.array([self.gap[k, i] for i in range(3)])

        def f(ell):
            delta = side * math.exp(ell)
            v = abs(self.local(k, delta))
            if v == 0:
                return -1e308, 0.0
            # d/d(ell) log|int_0^delta P| = delta P(Zk + delta) / int_0^delta P
            y = self.hi[k] + delta
            dv = abs(delta * self.P_at(y, offs + delta)) / v
            return math.log(v) - lt, dv

        top = math.log(span)
        lo = hi = min(math.log(guess), top)
        flo, dlo = f(lo)
        step = 0.5
        if flo < 0:
            hi, fhi = lo, flo
            while fhi < 0:
                lo, flo = hi, fhi
                hi = min(hi + step, top)
                fhi = f(hi)[0] if hi < top else 1.0
                step *= 2
        else:
            fhi = flo
            while flo > 0:
                hi, fhi = lo, flo
                lo -= step
                flo = f(lo)[0]
                step *= 2
        if flo == 0:
            return side * math.exp(lo)
        # safeguarded Newton inside the bracket [lo, hi]
        ell = lo if abs(flo) < abs(fhi) else hi
        for _ in range(100):
            fe, de = f(ell)
            if fe == 0:
                break
            if fe < 0:
                lo = ell
            else:
                hi = ell
            new = ell - fe / de if de > 0 else math.nan
            if not lo < new < hi:
                new = 0.5 * (lo + hi)
            if abs(new - ell) <= 4e-16 * max(1.0, abs(ell)) or hi - lo <= 4e-16 * max(1.0, abs(lo)):
                ell = new
                break
            ell = new
        return side * math.exp(ell)
