import math
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kestenlab.analysis import tail_index
from kestenlab.offspring import (
    BinomialCritical,
    CanonicalStable,
    FiniteSupport,
    GeometricCritical,
    law_to_string,
    parse_law,
)

REF = FiniteSupport({0: 0.5, 2: 0.5})


def test_pgf_examples():
    law = CanonicalStable(2.0, 0.5)
    assert law.pgf(0.0) == 0.5
    assert law.pgf(0.5) == pytest.approx(0.625, abs=1e-15)
    for other in (law, REF, CanonicalStable(1.5), BinomialCritical(4), GeometricCritical()):
        assert other.pgf(1.0) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("s", [-0.1, 1.5])
def test_pgf_domain(s):
    with pytest.raises(ValueError):
        CanonicalStable(1.5).pgf(s)


def test_stable_pmf_examples():
    law = CanonicalStable(1.5, 2 / 3)
    assert law.pmf(0) == pytest.approx(2 / 3)
    assert law.pmf(1) == pytest.approx(0.0, abs=1e-15)
    assert law.pmf(2) == pytest.approx(0.25)
    assert law.pmf(3) == pytest.approx(1 / 24)
    assert REF.pmf(2) == 0.5


@pytest.mark.parametrize("alpha", [1.1, 1.3, 1.5, 1.8, 2.0])
def test_stable_pmf_normalized_and_critical(alpha):
    law = CanonicalStable(alpha)
    K = 1 << 16
    pmf = law.pmf_array(K)
    assert np.all(pmf >= 0)
    # the tails beyond K are known exactly from the survival functions
    assert pmf.sum() + law.survival(K) == pytest.approx(1.0, abs=1e-12)
    assert np.sum(np.arange(K + 1) * pmf) + law.survival(K, size_biased=True) == pytest.approx(1.0, abs=1e-10)


def test_stable_pgf_matches_series():
    law = CanonicalStable(1.5)
    K = 4000
    pmf = law.pmf_array(K)
    for s in np.linspace(0, 0.99, 12):
        series = np.polynomial.polynomial.polyval(s, pmf)
        assert abs(law.pgf(s) - series) <= law.survival(K) * s**K + 1e-14


@pytest.mark.parametrize("law", [CanonicalStable(1.5), CanonicalStable(1.2), REF, BinomialCritical(4), GeometricCritical()])
def test_survival_matches_pmf(law):
    pmf = law.pmf_array(200)
    k = np.arange(201)
    assert np.allclose([law.survival(j) for j in range(200)], 1 - np.cumsum(pmf)[:200], atol=1e-13)
    assert np.allclose([law.survival(j, True) for j in range(200)], 1 - np.cumsum(k * pmf)[:200], atol=1e-12)


def test_survival_head_and_tail_agree():
    law = CanonicalStable(1.5)
    law._table(False, min_len=1 << 20)
    K = len(law._tables[False]) - 1
    for sb in (False, True):
        head = law.survival(K, sb)
        tail = math.exp(law._log_tail_survival(K, sb))
        assert tail == pytest.approx(head, rel=1e-10)


def test_finite_support_validation():
    with pytest.raises(ValueError):
        FiniteSupport({0: 0.5, 1: 0.6})
    with pytest.raises(ValueError):
        FiniteSupport({0: 0.25, 1: 0.75})
    with pytest.raises(ValueError):
        FiniteSupport({1: 1.0})


@pytest.mark.parametrize("law", [REF, BinomialCritical(3), CanonicalStable(1.5), GeometricCritical()])
def test_empirical_frequencies(law):
    rng = np.random.default_rng(11)
    n = 10**6
    x = law.sample(rng, n)
    for k in range(6):
        p = law.pmf(k)
        if p > 0:
            assert abs(np.mean(x == k) - p) <= 4 * math.sqrt(p / n)


def test_reference_law_examples():
    rng = np.random.default_rng(3)
    x = REF.sample(rng, 10**6)
    assert abs(np.mean(x == 0) - 0.5) < 0.002
    assert np.all(REF.sample_size_biased(rng, 1000) == 2)
    y = CanonicalStable(2.0).sample(rng, 10**6)
    assert abs(y.mean() - 1.0) < 0.005


def test_stable_tail_indices():
    rng = np.random.default_rng(5)
    law = CanonicalStable(1.5, 2 / 3)
    x = law.sample(rng, 10**6)
    # the 5% cut would sit among the first few integers, where the law is not yet a power
    assert tail_index(x[x > 0].astype(float), 0.005) == pytest.approx(1.5, abs=0.1)
    y = law.sample_size_biased(rng, 10**6)
    assert y.min() >= 1
    assert np.mean(y == 2) == pytest.approx(0.5, abs=0.002)
    assert tail_index(y.astype(float), 0.05) == pytest.approx(0.5, abs=0.1)


def test_size_biased_mean_finite_variance():
    rng = np.random.default_rng(8)
    law = BinomialCritical(4)
    y = law.sample_size_biased(rng, 10**6)
    k = np.arange(5)
    target = float(np.sum(k * k * law.pmf_array(4)))
    assert abs(y.mean() - target) < 4 * y.std() / 1000


def test_inversion_picks_smallest_k():
    law = CanonicalStable(1.5)
    # k = 1 carries no mass for the default c
    for k in [0, 2, 7, 100, 5000]:
        s = law.survival(k)
        assert law.invert(np.array([s]))[0] <= k
        assert law.invert(np.array([s * (1 + 1e-9)]))[0] == k


def test_deep_tail_inversion():
    law = CanonicalStable(1.5)
    v = np.array([1e-5, 1e-8, 1e-12])
    k = law.invert(v)
    for kk, vv in zip(k, v):
        assert law.survival(int(kk)) <= vv < law.survival(int(kk) - 1)


def test_overflow_is_loud():
    law = CanonicalStable(1.05)
    with pytest.raises(OverflowError):
        law.invert(np.array([1e-300]))


def test_sample_sum_matches_direct_sum():
    from scipy import stats

    law = CanonicalStable(1.5)
    rng = np.random.default_rng(2)
    a = law.sample_sum(np.full(4000, 3000), rng)
    b = np.array([law.sample(rng, 3000).sum() for _ in range(4000)])
    assert stats.ks_2samp(a, b).pvalue > 1e-3


def test_sample_sum_scalar_and_zero():
    rng = np.random.default_rng(0)
    assert CanonicalStable(1.5).sample_sum(0, rng) == 0
    assert REF.sample_sum(np.array([0, 0]), rng).tolist() == [0, 0]


def test_concurrent_sampling_is_consistent():
    law = CanonicalStable(1.5)
    results = {}

    def work(i):
        results[i] = law.sample(np.random.default_rng(i), 20000)

    threads = [threading.Thread(target=work, args=(i,)) for i in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    fresh = CanonicalStable(1.5)
    for i in range(4):
        assert np.array_equal(results[i], fresh.sample(np.random.default_rng(i), 20000))


@pytest.mark.parametrize(
    "text,expected",
    [
        ("stable:alpha=1.5", CanonicalStable(1.5)),
        ("stable:alpha=1.5,c=2/3", CanonicalStable(1.5, 2 / 3)),
        ("finite:0=0.5,2=0.5", REF),
        ("binomial:N=4", BinomialCritical(4)),
        ("geometric", GeometricCritical()),
    ],
)
def test_parse_law(text, expected):
    law = parse_law(text)
    assert law == expected
    assert parse_law(law_to_string(law)) == law


def test_parse_law_snaps_rounded_c():
    with pytest.warns(UserWarning):
        law = parse_law("stable:alpha=1.5,c=0.6667")
    assert law.c == pytest.approx(2 / 3)


@pytest.mark.parametrize("bad", ["stable:alpha=2.5", "stable:alpha=1.5,c=0.9", "finite:0=0.3,2=0.3", "poisson", "binomial:N=0"])
def test_parse_law_rejects(bad):
    with pytest.raises(ValueError):
        parse_law(bad)


@st.composite
def critical_laws(draw):
    # critical law on {0, a, b} with a < 1 < b ... or with mass at 1
    b = draw(st.integers(2, 6))
    q1 = draw(st.floats(0.0, 0.8))
    # remaining mass 1 - q1 split between 0 and b with mean 1 - q1
    pb = (1 - q1) / b
    p0 = 1 - q1 - pb
    pmf = {0: p0, b: pb}
    if q1 > 0:
        pmf[1] = q1
    return FiniteSupport(pmf)


@settings(max_examples=40, deadline=None)
@given(critical_laws(), st.floats(0.0, 1.0))
def test_inverse_cdf_property(law, u):
    v = 1.0 - u if u < 1.0 else 1e-300
    k = int(law.invert(np.array([max(v, 1e-300)]))[0])
    cdf = 1.0 - np.array([law.survival(j) for j in range(law.max_support + 1)])
    assert cdf[k] >= u - 1e-15
    assert k == 0 or cdf[k - 1] < u + 1e-15 or law.pmf(k) > 0


@settings(max_examples=30, deadline=None)
@given(critical_laws(), st.floats(0.0, 1.0))
def test_pgf_series_property(law, s):
    pmf = law.pmf_array(law.max_support)
    assert law.pgf(s) == pytest.approx(float(np.polynomial.polynomial.polyval(s, pmf)), abs=1e-14)
