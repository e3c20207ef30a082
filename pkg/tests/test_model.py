import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from sktlimit.errors import DomainError, RegimeError, StateError
from sktlimit.model import (WEAK_EXAMPLE, STRONG_EXAMPLE, ModelParams, RegimeTag, classify_regime, constant_state,
                            discriminant_D, fg_zero_landmarks, f_along, g_along, h_du, h_value,
                            potential_H, quartic_coefficients, reaction_f, reaction_g, tau_bar,
                            tau_tilde, uv_from_w, w_from_uv, weight, zeros_of_h)

from conftest import competitive_params


def D_exact(a1, a2, b1, b2, c1, c2, gamma):
    """Discriminant in rational arithmetic."""
    A, B, C = Fraction(a1) / a2, Fraction(b1) / b2, Fraction(c1) / c2
    return gamma * b2 * (A - B) * (B + C - 2 * A) + c2 * (C - A) * (A * (B + C) - 2 * B * C)


def test_params_reject_nonpositive():
    with pytest.raises(DomainError):
        ModelParams(1, 1, 1, 1, 1, 0)
    with pytest.raises(DomainError):
        ModelParams(1, 1, 1, 1, 1, 1, gamma=-1.0)


def test_regime_examples():
    assert classify_regime(WEAK_EXAMPLE).tag is RegimeTag.WEAK
    assert math.isclose(WEAK_EXAMPLE.A, 105 / 32)
    assert classify_regime(STRONG_EXAMPLE).tag is RegimeTag.STRONG
    deg = classify_regime(ModelParams(1, 1, 1, 1, 1, 1))
    assert deg.tag is RegimeTag.DEGENERATE
    assert "A = B" in deg.reason and "A = C" in deg.reason


def test_reaction_examples():
    cs = constant_state(WEAK_EXAMPLE)
    assert abs(reaction_f(cs.u_star, cs.v_star, WEAK_EXAMPLE)) < 1e-14
    assert reaction_f(STRONG_EXAMPLE.a1 / STRONG_EXAMPLE.b1, 0.0, STRONG_EXAMPLE) == 0.0
    assert abs(reaction_g(1 / 3, 1 / 3, STRONG_EXAMPLE)) < 1e-16


def test_transform_examples():
    u, v = uv_from_w(0.0, 0.25, ModelParams(1, 1, 1, 1, 1, 1, gamma=2.0, delta=0.5))
    assert math.isclose(u, math.sqrt(2.0 * 0.25 / 0.5), rel_tol=1e-14)
    w, tau = w_from_uv(1 / 3, 1 / 3, STRONG_EXAMPLE)
    assert abs(w) < 1e-16 and math.isclose(tau, 1 / 9, rel_tol=1e-15)
    u, v = uv_from_w(3.0, 1.0, STRONG_EXAMPLE)
    assert math.isclose(u, (math.sqrt(13) + 3) / 2, rel_tol=1e-14)
    assert math.isclose(v, (math.sqrt(13) - 3) / 2, rel_tol=1e-14)
    with pytest.raises(DomainError):
        uv_from_w(1.0, 0.0, STRONG_EXAMPLE)


@given(w=st.floats(-10, 10), frac=st.floats(1e-6, 1.0), p=competitive_params())
def test_transform_round_trip(w, frac, p):
    tau = frac * tau_bar(p)
    u, v = uv_from_w(w, tau, p)
    w2, tau2 = w_from_uv(u, v, p)
    assert math.isclose(u * v, tau, rel_tol=1e-12)
    assert math.isclose(tau2, tau, rel_tol=1e-12)
    assert abs(w2 - w) <= 1e-12 * max(1.0, abs(w), p.delta * u, p.gamma * v)


@given(u=st.floats(1e-3, 20.0), t=st.floats(1e-4, 5.0), p=competitive_params())
def test_h_is_f_minus_gamma_g(u, t, p):
    v = t / u
    lhs = h_value(u, t, p)
    rhs = reaction_f(u, v, p) - p.gamma * reaction_g(u, v, p)
    scale = abs(reaction_f(u, v, p)) + p.gamma * abs(reaction_g(u, v, p)) + 1e-300
    assert abs(lhs - rhs) <= 1e-12 * max(scale, abs(lhs))


@given(u=st.floats(0.05, 5.0), t=st.floats(1e-3, 1.0), p=competitive_params())
def test_h_du_matches_central_differences(u, t, p):
    eps = 1e-5 * u
    fd = (h_value(u + eps, t, p) - h_value(u - eps, t, p)) / (2 * eps)
    an = h_du(u, t, p)
    scale = max(abs(an), abs(h_value(u, t, p)) / u, 1e-8)
    assert abs(fd - an) <= 1e-6 * scale


def test_h_examples():
    assert abs(h_value(1 / 3, 1 / 9, STRONG_EXAMPLE)) < 1e-15
    assert h_value(1e-6, 1e-2, STRONG_EXAMPLE) > 0
    assert abs(h_value(9 / 14, 207 / 392, WEAK_EXAMPLE)) < 1e-14
    with pytest.raises(DomainError):
        h_value(0.0, 0.1, STRONG_EXAMPLE)


def test_quartic_matches_h():
    tau = 0.07
    c = quartic_coefficients(tau, WEAK_EXAMPLE)
    for u in (0.1, 0.5, 1.7):
        assert math.isclose(np.polyval(c, u), u * u * h_value(u, tau, WEAK_EXAMPLE), rel_tol=1e-12)


def test_zero_triples():
    z = zeros_of_h(1 / 9, STRONG_EXAMPLE)
    assert z.complete and math.isclose(z.z2, 1 / 3, rel_tol=1e-12)
    assert not zeros_of_h(1.0, WEAK_EXAMPLE).complete
    for p in (STRONG_EXAMPLE, WEAK_EXAMPLE):
        tau = 1e-8
        z = zeros_of_h(tau, p)
        assert z.complete
        assert abs(z.z1 / tau / (p.c2 / p.a2) - 1) < 1e-3
        assert abs(z.z2 / math.sqrt(tau) / math.sqrt(p.gamma * p.a2 / p.a1) - 1) < 1e-3
        assert abs(z.z3 / (p.a1 / p.b1) - 1) < 1e-3


@given(p=competitive_params(), frac=st.floats(1e-3, 0.999))
def test_zero_invariants(p, frac):
    tau = frac * tau_bar(p)
    z = zeros_of_h(tau, p)
    assert list(z.zeros) == sorted(z.zeros) and all(v > 0 for v in z.zeros)
    for v in z.zeros:
        # residual of the polished root, measured on the scale of the terms of h
        scale = v * (p.a1 + p.b1 * v) + tau * (p.c1 + p.gamma * (p.a2 / v + p.b2 + p.c2 * tau / v ** 2))
        assert abs(h_value(v, tau, p)) <= 1e-11 * max(1.0, scale)
    if z.complete:
        z1, z2, z3 = z.zeros
        assert h_value(0.5 * z1, tau, p) > 0
        assert h_value(0.5 * (z1 + z2), tau, p) < 0
        assert h_value(0.5 * (z2 + z3), tau, p) > 0
        assert h_value(2 * z3, tau, p) < 0


def test_tau_bar_examples():
    assert tau_bar(STRONG_EXAMPLE) == 0.125
    # the minimum for this set is (15/2)^2/96 = 75/128; (16/7)^2/(4*1*2) is larger
    assert tau_bar(WEAK_EXAMPLE) == pytest.approx(75 / 128, rel=1e-15)
    assert tau_bar(ModelParams(2, 2, 1, 1, 1, 1)) == 1.0


def test_discriminant_examples():
    assert discriminant_D(WEAK_EXAMPLE) == pytest.approx(17 / 64, abs=1e-14)
    assert float(D_exact(15 / 2, 16 / 7, 4, 1, 6, 2, 1)) == pytest.approx(17 / 64, abs=1e-15)
    assert discriminant_D(STRONG_EXAMPLE) == pytest.approx(1.0, abs=1e-14)
    p = ModelParams(1, 1, 1, 1, 2, 1)
    A, B, C = p.A, p.B, p.C
    assert discriminant_D(p) == pytest.approx(p.c2 * (C - A) * (A * (B + C) - 2 * B * C))


@given(p=competitive_params())
def test_discriminant_rational_oracle(p):
    exact = float(D_exact(p.a1, p.a2, p.b1, p.b2, p.c1, p.c2, Fraction(p.gamma)))
    assert abs(discriminant_D(p) - exact) <= 1e-11 * max(1.0, abs(exact))


def test_constant_state_examples():
    cs = constant_state(STRONG_EXAMPLE)
    assert cs.u_star == pytest.approx(1 / 3, abs=1e-15) and cs.v_star == pytest.approx(1 / 3, abs=1e-15)
    assert cs.tau_star == pytest.approx(1 / 9, abs=1e-15)
    assert constant_state(WEAK_EXAMPLE).tau_star == pytest.approx(207 / 392, abs=1e-14)
    sym = constant_state(ModelParams(1, 1, 2, 1, 1, 2))
    assert sym.u_star == pytest.approx(1 / 3) and sym.v_star == pytest.approx(1 / 3)
    with pytest.raises(RegimeError):
        constant_state(ModelParams(1, 1, 1, 1, 1, 1))


@given(p=competitive_params())
def test_constant_state_invariants(p):
    cs = constant_state(p)
    assert cs.u_star > 0 and cs.v_star > 0
    assert cs.w_star == p.delta * cs.u_star - p.gamma * cs.v_star
    assert cs.tau_star == cs.u_star * cs.v_star
    for r, s in ((reaction_f(cs.u_star, cs.v_star, p), p.a1 * cs.u_star),
                 (reaction_g(cs.u_star, cs.v_star, p), p.a2 * cs.v_star)):
        assert abs(r) <= 1e-12 * s


@given(p=competitive_params())
def test_D_positive_iff_centre_slope_positive(p):
    cs = constant_state(p)
    D = discriminant_D(p)
    z = zeros_of_h(cs.tau_star, p)
    if abs(D) < 1e-6 or not z.complete:
        return
    slope = h_du(cs.u_star, cs.tau_star, p)
    assert (D > 0) == (slope > 0)
    if D > 0:
        assert abs(cs.u_star - z.z2) < 1e-9 * max(1.0, cs.u_star)


def test_landmarks():
    tau = 1e-7
    for p in (STRONG_EXAMPLE, WEAK_EXAMPLE):
        lm = fg_zero_landmarks(tau, p)
        assert lm.Z1f / tau == pytest.approx(p.c1 / p.a1, rel=1e-5)
        assert lm.Z2f == pytest.approx(p.a1 / p.b1, rel=1e-5)
        assert abs(f_along(lm.Z1f, tau, p)) < 1e-18 and abs(g_along(lm.Z1g, tau, p)) < 1e-15
    lm = fg_zero_landmarks(0.01, STRONG_EXAMPLE)
    assert lm.Z1g < lm.Z1f < lm.Z2g < lm.Z2f
    p = ModelParams(1, 4, 1, 1, 1, 1)
    tb = p.a1 ** 2 / (4 * p.b1 * p.c1)
    assert tau_bar(p) == tb
    lm = fg_zero_landmarks(tb, p)
    assert lm.Z1f == pytest.approx(p.a1 / (2 * p.b1)) and lm.Z2f == pytest.approx(p.a1 / (2 * p.b1))
    with pytest.raises(DomainError):
        fg_zero_landmarks(1.01 * tau_bar(STRONG_EXAMPLE), STRONG_EXAMPLE)


def test_f_sign_pattern_at_zeros():
    tau = 1e-3
    z = zeros_of_h(tau, STRONG_EXAMPLE).zeros
    assert [np.sign(f_along(v, tau, STRONG_EXAMPLE)) for v in z] == [-1, 1, -1]
    z = zeros_of_h(tau, WEAK_EXAMPLE).zeros
    assert [np.sign(f_along(v, tau, WEAK_EXAMPLE)) for v in z] == [1, 1, 1]


def test_potential_against_quadrature():
    tau = 1 / 9
    z2 = zeros_of_h(tau, STRONG_EXAMPLE).z2
    integrand = lambda s: h_value(s, tau, STRONG_EXAMPLE) * weight(s, tau, STRONG_EXAMPLE)
    ref, _ = quad(integrand, z2, 0.5, epsabs=0, epsrel=1e-13, limit=200)
    assert potential_H(0.5, tau, STRONG_EXAMPLE) == pytest.approx(ref, rel=1e-10)
    assert potential_H(z2, tau, STRONG_EXAMPLE) == 0.0


@given(p=competitive_params(), frac=st.floats(0.01, 0.99), s=st.floats(0.05, 3.0))
def test_potential_random_quadrature(p, frac, s):
    tau = frac * tau_bar(p)
    z = zeros_of_h(tau, p)
    if not z.complete:
        with pytest.raises(StateError):
            potential_H(1.0, tau, p)
        return
    u = s * z.z2
    integrand = lambda t: h_value(t, tau, p) * weight(t, tau, p)
    ref, err = quad(integrand, z.z2, u, epsabs=0, epsrel=1e-13, limit=400)
    scale = quad(lambda t: abs(integrand(t)), min(u, z.z2), max(u, z.z2), limit=400)[0]
    assert abs(potential_H(u, tau, p) - ref) <= 1e-10 * max(scale, 1e-300)


def test_potential_extrema():
    tau = 0.05
    z1, z2, z3 = zeros_of_h(tau, STRONG_EXAMPLE).zeros
    H = lambda u: potential_H(u, tau, STRONG_EXAMPLE)
    for zk, kind in ((z1, "max"), (z2, "min"), (z3, "max")):
        e = 1e-4 * zk
        if kind == "max":
            assert H(zk) > H(zk - e) and H(zk) > H(zk + e)
        else:
            assert H(zk) < H(zk - e) and H(zk) < H(zk + e)


def test_tau_tilde():
    tt = tau_tilde(WEAK_EXAMPLE)
    assert 0 < tt < tau_bar(WEAK_EXAMPLE)
    assert zeros_of_h(tt, WEAK_EXAMPLE).complete and not zeros_of_h(tt + 2e-8, WEAK_EXAMPLE).complete
    assert tau_tilde(STRONG_EXAMPLE) == tau_bar(STRONG_EXAMPLE)
