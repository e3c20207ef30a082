import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from sktlimit.model import ModelParams, RegimeTag, classify_regime, discriminant_D

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.large_base_example,
                                                 HealthCheck.filter_too_much])
settings.load_profile("default")

positive = st.floats(min_value=0.2, max_value=8.0, allow_nan=False, allow_infinity=False)


@st.composite
def competitive_params(draw, require_D=False):
    """Random parameters in the weak or strong competition regime."""
    while True:
        vals = [draw(positive) for _ in range(6)]
        gamma = draw(st.floats(min_value=0.3, max_value=3.0))
        delta = draw(st.floats(min_value=0.3, max_value=3.0))
        p = ModelParams(*vals, gamma=gamma, delta=delta)
        if classify_regime(p).tag is RegimeTag.DEGENERATE:
            continue
        if abs(p.A - p.B) < 1e-3 * p.A or abs(p.A - p.C) < 1e-3 * p.A:
            continue
        if require_D and not discriminant_D(p) > 1e-6:
            continue
        return p


def random_competitive(rng, n, require_D=True):
    """n reproducible Weak/Strong parameter sets drawn with numpy."""
    out = []
    while len(out) < n:
        vals = rng.uniform(0.2, 8.0, 6)
        g, dl = rng.uniform(0.3, 3.0, 2)
        p = ModelParams(*vals, gamma=g, delta=dl)
        if classify_regime(p).tag is RegimeTag.DEGENERATE:
            continue
        if require_D and not discriminant_D(p) > 1e-6:
            continue
        out.append(p)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion."""

    def record(number, title, passed, detail):
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}: {title} ({detail})"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
