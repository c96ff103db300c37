import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kestenlab.analysis import (
    DegenerateFitError,
    HorizonError,
    InsufficientSamplesError,
    ScalingFunctions,
    fit_loglog,
    tail_index,
    theoretical_exponents,
)
from kestenlab.branching import build_survival_table
from kestenlab.offspring import CanonicalStable, FiniteSupport

REF = FiniteSupport({0: 0.5, 2: 0.5})


@pytest.fixture(scope="module")
def ref_scaling():
    return ScalingFunctions(build_survival_table(REF, 4096))


def test_scaling_values(ref_scaling):
    s = ref_scaling
    assert s.v(1) == 2.0
    assert s.v(2) == pytest.approx(16 / 3)
    assert s.h(1) == 2.0
    assert s.I(2) == pytest.approx(1.0)
    # h is quadratic on [0, 1]: h(x) = 2 x^2
    assert s.I(1) == pytest.approx(1 / math.sqrt(2))
    assert s.I(0) == 0.0


def test_scaling_asymptotics(ref_scaling):
    # p_n ~ 2/n for this law, so v(x) ~ x^2 / 2
    assert ref_scaling.v(4000) / 4000**2 == pytest.approx(0.5, rel=0.01)


def test_scaling_horizon(ref_scaling):
    with pytest.raises(HorizonError):
        ref_scaling.v(5000)
    with pytest.raises(HorizonError):
        ref_scaling.I(ref_scaling.h(4096) * 2)
    with pytest.raises(HorizonError):
        ref_scaling.v(-1)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 4000.0))
def test_I_inverts_h(x):
    s = ScalingFunctions(build_survival_table(CanonicalStable(1.5), 4096))
    assert s.I(s.h(x)) == pytest.approx(x, rel=1e-9, abs=1e-9)


def test_scaling_is_vectorized(ref_scaling):
    x = np.array([1.0, 2.5, 10.0])
    assert np.allclose(ref_scaling.v(x), [ref_scaling.v(t) for t in x])
    assert np.allclose(ref_scaling.I(ref_scaling.h(x)), x)


@pytest.mark.parametrize("alpha", [1.5, 2.0])
def test_theoretical_exponents(alpha):
    e = theoretical_exponents(alpha)
    assert e.exit == pytest.approx(e.volume + 1)
    assert e.spectral == pytest.approx(2 * e.volume / e.exit)
    assert e.displacement == pytest.approx(1 / e.exit)
    assert e.range == pytest.approx(e.spectral / 2)
    with pytest.raises(ValueError):
        theoretical_exponents(1.0)


def test_alexander_orbach_case():
    assert theoretical_exponents(2.0).spectral == pytest.approx(4 / 3)
    assert theoretical_exponents(1.5).spectral == pytest.approx(1.5)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(-5, 5))
def test_fit_recovers_power_law(slope, c):
    x = 2.0 ** np.arange(3, 10)
    fit = fit_loglog(zip(x, math.exp(c) * x**slope))
    assert fit.slope == pytest.approx(slope, abs=1e-9)
    assert fit.intercept == pytest.approx(c, abs=1e-8)
    assert fit.contains(slope, 1e-6)


def test_fit_errors():
    with pytest.raises(DegenerateFitError):
        fit_loglog([(1, 1), (2, 2)])
    with pytest.raises(DegenerateFitError):
        fit_loglog([(2, 1), (2, 2), (2, 3)])
    with pytest.raises(ValueError):
        fit_loglog([(1, 1), (2, 0), (4, 3)])


@pytest.mark.parametrize("index", [0.5, 1.0, 2.0])
def test_hill_on_pareto(index):
    rng = np.random.default_rng(int(index * 10))
    x = rng.pareto(index, 200_000) + 1.0
    assert tail_index(x) == pytest.approx(index, rel=0.05)


def test_hill_edge_cases():
    assert tail_index(np.ones(2000)) == math.inf
    with pytest.raises(InsufficientSamplesError):
        tail_index(np.ones(10))
    with pytest.raises(ValueError):
        tail_index(np.zeros(2000))
    with pytest.raises(ValueError):
        tail_index(np.ones(2000), top_fraction=0.9)
