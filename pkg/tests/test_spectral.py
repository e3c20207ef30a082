import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from sktlimit.errors import DiscriminantError, DomainError, RegimeError
from sktlimit.model import WEAK_EXAMPLE, STRONG_EXAMPLE, ModelParams, RegimeTag, classify_regime
from sktlimit.spectral import (bifurcation_point, constant_det, constant_matrix, expected_index,
                               lambda_j, mu_j, spectral_report)

from conftest import competitive_params


def test_lambda_examples():
    assert lambda_j(0) == 0.0
    assert lambda_j(1) == pytest.approx(math.pi ** 2, rel=1e-15)
    assert lambda_j(3) == pytest.approx(9 * math.pi ** 2, rel=1e-15)
    for bad in (-1, 1.5):
        with pytest.raises(DomainError):
            lambda_j(bad)


def test_first_bifurcation_points():
    assert bifurcation_point(STRONG_EXAMPLE, 1) == pytest.approx(1 / (3 * math.pi ** 2), rel=1e-13)
    assert bifurcation_point(STRONG_EXAMPLE, 1) == pytest.approx(0.0337737, abs=5e-8)
    assert bifurcation_point(WEAK_EXAMPLE, 1) == pytest.approx(0.0480128, abs=5e-8)


def test_first_bifurcation_exact_weak_example():
    # rational arithmetic for u*, v*, K and S
    a1, a2, b1, b2, c1, c2 = (sp.Rational(15, 2), sp.Rational(16, 7), 4, 1, 6, 2)
    u, v = sp.symbols("u v")
    sol = sp.solve([a1 - b1 * u - c1 * v, a2 - b2 * u - c2 * v], [u, v])
    us, vs = sol[u], sol[v]
    K = (b2 + c1) * us * vs - b1 * us ** 2 - c2 * vs ** 2
    exact = K / ((us + vs) * sp.pi ** 2)
    assert bifurcation_point(WEAK_EXAMPLE, 1) == pytest.approx(float(exact), rel=1e-14)


@given(p=competitive_params(require_D=True))
def test_bifurcation_points_scale_with_lambda(p):
    d1 = bifurcation_point(p, 1)
    for j in (2, 3, 7):
        assert bifurcation_point(p, j) * lambda_j(j) == pytest.approx(d1 * lambda_j(1), rel=1e-12)
        assert abs(mu_j(p, bifurcation_point(p, j), j)) < 1e-10


def test_bifurcation_errors():
    with pytest.raises(DiscriminantError):
        bifurcation_point(ModelParams(1, 1, 2, 1, 1, 2), 1)
    with pytest.raises(DomainError):
        bifurcation_point(STRONG_EXAMPLE, 0)


def test_matrix_determinant_matches_closed_form():
    p = WEAK_EXAMPLE
    d = 0.01
    M = constant_matrix(p, d)
    assert M.shape == (2, 2)
    assert np.linalg.det(M) == pytest.approx(constant_det(p, d), rel=1e-12)


@given(p=competitive_params(require_D=False), logd=st.floats(-4, 0))
def test_det_closed_form(p, logd):
    d = 10 ** logd
    det = np.linalg.det(constant_matrix(p, d))
    closed = constant_det(p, d)
    assert det == pytest.approx(closed, rel=1e-9, abs=1e-12 * np.max(np.abs(constant_matrix(p, d))) ** 2)
    assert np.sign(closed) == np.sign(p.b1 * p.c2 - p.b2 * p.c1)


def test_mu_monotone_in_d():
    for p in (STRONG_EXAMPLE, WEAK_EXAMPLE):
        ds = np.geomspace(1e-4, 1.0, 40)
        for j in (1, 2, 5):
            vals = [mu_j(p, d, j) for d in ds]
            assert np.all(np.diff(vals) > 0)
            assert vals[-1] < 1


def test_report_fields():
    r = spectral_report(STRONG_EXAMPLE, 0.02, J_max=5)
    assert len(r.mu_seq) == 5 and len(r.mu0_pair) == 2
    assert r.index in (-1, 1) and r.index == (-1) ** r.sigma
    with pytest.raises(RegimeError):
        spectral_report(ModelParams(1, 1, 1, 1, 1, 1), 0.1)
    with pytest.raises(DomainError):
        spectral_report(STRONG_EXAMPLE, -1.0)


@pytest.mark.parametrize("p", [STRONG_EXAMPLE, WEAK_EXAMPLE])
def test_index_table(p):
    tag = classify_regime(p).tag
    d1 = bifurcation_point(p, 1)
    above = spectral_report(p, 1.5 * d1).index
    between = spectral_report(p, 0.5 * (bifurcation_point(p, 2) + d1)).index
    assert above == (1 if tag is RegimeTag.WEAK else -1)
    assert between == -above
    d = np.geomspace(1.01 * bifurcation_point(p, 6), 1.99 * d1, 60)
    for x in d:
        if min(abs(x / bifurcation_point(p, k) - 1) for k in range(1, 8)) < 1e-9:
            continue
        assert spectral_report(p, x).index == expected_index(p, x)
