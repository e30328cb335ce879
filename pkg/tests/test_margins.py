import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from stxtreme.errors import DomainError, InsufficientData, NoConvergence
from stxtreme.margins import (GpdParams, fit_gpd, fit_marginal, from_unit_frechet,
                              gpd_cdf, gpd_score, gpd_standard_errors, semiparametric_cdf,
                              to_unit_frechet)


def test_gpd_cdf_exponential_limit():
    assert gpd_cdf(GpdParams(1.0, 0.0), 1.0) == pytest.approx(1 - np.exp(-1), abs=1e-12)


def test_gpd_cdf_lower_endpoint():
    assert gpd_cdf(GpdParams(2.0, 0.5), 0.0) == 0.0


def test_gpd_cdf_finite_endpoint():
    p = GpdParams(1.0, -0.5)
    assert p.upper_endpoint == 2.0
    assert gpd_cdf(p, 2.0) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        gpd_cdf(p, 2.5)


def test_gpd_cdf_matches_scipy():
    y = np.linspace(0, 10, 50)
    for xi in (-0.3, 0.2, 0.7):
        np.testing.assert_allclose(gpd_cdf(GpdParams(1.5, xi), np.minimum(y, 4.9)),
                                   stats.genpareto.cdf(np.minimum(y, 4.9), xi, scale=1.5),
                                   atol=1e-12)


def test_fit_gpd_recovers_parameters():
    y = stats.genpareto.rvs(0.2, scale=1.0, size=10_000, random_state=1)
    p = fit_gpd(y)
    se = gpd_standard_errors(p, y)
    assert abs(p.sigma - 1.0) < 3 * se[0]
    assert abs(p.xi - 0.2) < 3 * se[1]


def test_fit_gpd_exponential_sample():
    y = np.random.default_rng(2).exponential(size=10_000)
    p = fit_gpd(y)
    se = gpd_standard_errors(p, y)
    assert abs(p.xi) < 3 * se[1]


def test_fit_gpd_score_vanishes():
    y = stats.genpareto.rvs(0.1, scale=2.0, size=3000, random_state=3)
    p = fit_gpd(y)
    assert np.linalg.norm(gpd_score(p, y)) / y.size < 1e-6


def test_fit_gpd_degenerate():
    with pytest.raises(NoConvergence):
        fit_gpd(np.full(100, 3.0))


def test_fit_gpd_too_few():
    with pytest.raises(InsufficientData):
        fit_gpd(np.arange(1, 5, dtype=float))


@pytest.fixture(scope="module")
def transform():
    rng = np.random.default_rng(5)
    x = stats.genpareto.rvs(0.15, size=50_000, random_state=rng)
    return x, fit_marginal(x, quantile=0.9)


def test_cdf_continuous_at_threshold(transform):
    x, m = transform
    below = np.searchsorted(m.sorted_sample, m.u, side="right") / (m.n + 1)
    assert semiparametric_cdf(m, m.u) == pytest.approx(1 - m.zeta_u, abs=1 / m.n)
    assert abs(below - (1 - m.zeta_u)) <= 1 / m.n


def test_cdf_clamped_below_minimum(transform):
    _, m = transform
    v = semiparametric_cdf(m, m.sorted_sample[0] - 1.0)
    assert 0 < v <= 1e-12


def test_cdf_matches_generating_law(transform):
    _, m = transform
    grid = np.linspace(0, 15, 400)
    diff = semiparametric_cdf(m, grid) - stats.genpareto.cdf(grid, 0.15)
    assert np.max(np.abs(diff)) < 0.01


def test_frechet_anchor_values():
    # low threshold so that both anchors lie in the GPD tail
    x = np.random.default_rng(0).exponential(size=5000)
    m = fit_marginal(x, quantile=0.3)
    for target in (1.0, 5.0):
        q = from_unit_frechet(m, np.array([target]))
        assert semiparametric_cdf(m, q)[0] == pytest.approx(np.exp(-1 / target), rel=1e-10)
        assert to_unit_frechet(m, q)[0] == pytest.approx(target, rel=1e-8)


def test_transformed_sample_is_unit_frechet():
    x = np.random.default_rng(7).gamma(2.0, size=20_000)
    m = fit_marginal(x, quantile=0.95)
    z = to_unit_frechet(m, x)
    assert stats.kstest(z, lambda q: np.exp(-1 / q)).pvalue > 0.01


def test_constant_series_rejected():
    with pytest.raises(InsufficientData, match="'s7'"):
        fit_marginal(np.ones(500), name="s7")


def test_nan_values_ignored():
    x = np.random.default_rng(8).exponential(size=2000)
    m1 = fit_marginal(x)
    m2 = fit_marginal(np.concatenate([x, [np.nan] * 10]))
    assert m1.u == m2.u and m1.gpd == m2.gpd
    assert np.isnan(semiparametric_cdf(m1, np.nan))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 30, allow_nan=False), min_size=2, max_size=50))
def test_cdf_nondecreasing(transform, xs):
    _, m = transform
    v = semiparametric_cdf(m, np.sort(xs))
    assert np.all(np.diff(v) >= 0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 25.0))
def test_tail_round_trip(transform, excess):
    _, m = transform
    x = np.array([m.u + 1e-3 + excess])
    back = from_unit_frechet(m, to_unit_frechet(m, x))
    if semiparametric_cdf(m, x)[0] < 1 - 1e-12:
        np.testing.assert_allclose(back, x, rtol=1e-8)
