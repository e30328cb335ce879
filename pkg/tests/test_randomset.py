import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stxtreme.errors import DomainError
from stxtreme.randomset import (BETA_A, INTERVAL_SPAN, CylinderSetParams, IntervalSetParams,
                                alpha, alpha_given_velocity, alpha_interval_1d,
                                alpha_interval_1d_quadrature, alpha_mc_oracle, alpha_spacetime,
                                disc_overlap_area, duration_factor, effective_distance,
                                fit_exponential_surrogate, lens_area)

from conftest import STORM


def test_disc_overlap_anchors():
    assert disc_overlap_area(1.0, 0.0) == pytest.approx(np.pi)
    assert disc_overlap_area(1.0, 2.0) == 0.0
    assert disc_overlap_area(51.21, 51.21) == pytest.approx(np.pi * 51.21**2 * 0.5)


def test_lens_area_anchors():
    assert lens_area(1.0, 0.0) == pytest.approx(np.pi)
    assert lens_area(1.0, 2.0) == pytest.approx(0.0, abs=1e-15)
    # exact lens for d = R: 2R^2 acos(1/2) - (R/2) sqrt(3) R
    assert lens_area(1.0, 1.0) == pytest.approx(2 * np.pi / 3 - np.sqrt(3) / 2)


def test_effective_distance_cases():
    assert effective_distance(30.0, 0.0, np.array([10.0, 5.0]), 0.3) == pytest.approx(30.0)
    assert effective_distance(0.0, 2.0, np.array([3.0, 4.0]), 1.0) == pytest.approx(10.0)
    th, s, t = 0.7, 40.0, 2.0
    v = (s / t) * np.array([np.cos(th), np.sin(th)])
    assert effective_distance(s, t, v, th) == pytest.approx(0.0, abs=1e-6)


def test_alpha_given_velocity_limits():
    assert alpha_given_velocity(STORM, 0.0) == pytest.approx(1.0)
    assert alpha_given_velocity(STORM, 1e7) == pytest.approx(0.0, abs=1e-12)


def test_alpha_given_velocity_matches_radius_mc():
    rng = np.random.default_rng(11)
    R = rng.gamma(0.28, 51.21 / 0.28, size=1_000_000)
    d = 50.0
    mc = np.sum(R**2 * np.maximum(0, 1 - d / (2 * R))) / np.sum(R**2)
    assert abs(alpha_given_velocity(STORM, d) - mc) < 0.005


def test_surrogate_anchor_and_fit():
    fit = fit_exponential_surrogate(STORM, 25.0, 10.0, 2.0)
    assert np.exp(-fit.a * 0.0) == 1.0
    assert fit.rms < 0.02
    assert not fit.warning


def test_surrogate_rate_decreases_with_radius():
    big = CylinderSetParams(**{**STORM.__dict__, "m_R": 2 * STORM.m_R})
    a_small = fit_exponential_surrogate(STORM, 20.0, 5.0, 3.0).a
    a_big = fit_exponential_surrogate(big, 20.0, 5.0, 3.0).a
    assert a_big < a_small


def test_surrogate_needs_positive_lag():
    with pytest.raises(DomainError):
        fit_exponential_surrogate(STORM, 1.0, 1.0, 0.0)


def test_alpha_spacetime_origin_and_long_lag():
    assert alpha_spacetime(STORM, 0.0, 0.0, 0.0) == pytest.approx(1.0)
    assert alpha_spacetime(STORM, 0.0, 60 * STORM.m_D, 0.0) < 0.005
    assert duration_factor(STORM, 60 * STORM.m_D) < 0.005


@pytest.mark.parametrize("s,t", [(50.0, 1.0), (0.0, 5.0), (120.0, 3.0)])
def test_alpha_spacetime_matches_cylinder_mc(s, t):
    est, se = alpha_mc_oracle(STORM, s, t, 0.0, n_draws=100_000, seed=3)
    assert abs(alpha_spacetime(STORM, s, t, 0.0) - est) < 0.02


def test_alpha_spacetime_needs_velocity_variance():
    narrow = CylinderSetParams(**{**STORM.__dict__, "var_V1": 4.0})
    with pytest.raises(DomainError):
        alpha_spacetime(narrow, 10.0, 1.0, 0.0)


def test_alpha_spacetime_nonincreasing_in_distance_at_zero_lag():
    v = alpha_spacetime(STORM, np.linspace(0, 500, 101), 0.0, 0.0)
    assert np.all(np.diff(v) <= 1e-15)


def test_alpha_isotropic_ignores_direction():
    p = CylinderSetParams(40.0, 1.5, 0.0, 0.0, 25.0, 25.0, 0.0, 10.0, 3.0)
    th = np.linspace(0, 2 * np.pi, 13)
    for s, t in [(20.0, 1.0), (60.0, 4.0), (5.0, 0.0)]:
        v = alpha_spacetime(p, s, t, th)
        assert np.ptp(v) < 1e-3


def test_alpha_interval_anchors():
    p = IntervalSetParams(40 / 3)
    assert alpha_interval_1d(p, 0.0) == pytest.approx(1.0)
    assert alpha_interval_1d(p, INTERVAL_SPAN) == 0.0
    assert alpha_interval_1d(p, 30.0) == 0.0


def test_alpha_interval_matches_beta_mc():
    p = IntervalSetParams(40 / 3)
    D = INTERVAL_SPAN * np.random.default_rng(4).beta(BETA_A, p.beta_b, size=1_000_000)
    mc = np.mean(np.maximum(D - 13.3, 0)) / np.mean(D)
    assert abs(alpha_interval_1d(p, 13.3) - mc) < 0.002


def test_alpha_interval_closed_form_matches_quadrature():
    p = IntervalSetParams(10.0)
    for t in (0.5, 3.0, 9.0, 17.0):
        assert alpha_interval_1d(p, t) == pytest.approx(alpha_interval_1d_quadrature(p, t),
                                                        abs=1e-10)


def test_alpha_dispatch():
    assert alpha(IntervalSetParams(12.0), 99.0, 2.0) == alpha_interval_1d(IntervalSetParams(12.0), 2.0)
    with pytest.raises(TypeError):
        alpha(object(), 0.0, 0.0)


def test_mc_oracle_origin_and_scaling():
    est, se = alpha_mc_oracle(STORM, 0.0, 0.0, 0.0, n_draws=10_000, seed=0)
    assert est == pytest.approx(1.0) and se == pytest.approx(0.0, abs=1e-12)
    # light-tailed radii keep the SE estimate itself stable
    p = CylinderSetParams(**{**STORM.__dict__, "k_R": 3.0})
    ratios = [alpha_mc_oracle(p, 60.0, 2.0, 0.3, n_draws=50_000, seed=s)[1]
              / alpha_mc_oracle(p, 60.0, 2.0, 0.3, n_draws=100_000, seed=s)[1]
              for s in range(4)]
    assert np.mean(ratios) == pytest.approx(np.sqrt(2), rel=0.05)


def test_alpha_spacetime_continuous_at_zero_lag():
    s = np.array([1.0, 50.0, 200.0])
    still = alpha_spacetime(STORM, s, 0.0, 0.0)
    for t in (1e-20, 1e-9, 1e-6, 1e-3):
        np.testing.assert_allclose(alpha_spacetime(STORM, s, t, 0.0), still, atol=1e-3)


@pytest.mark.parametrize("s,t,theta", [(10.0, 0.05, 0.0), (150.0, 0.3, 1.5),
                                       (300.0, 5.0, 3.0), (50.0, 2.0, 0.3)])
def test_alpha_spacetime_mc_across_regimes(s, t, theta):
    est, se = alpha_mc_oracle(STORM, s, t, theta, n_draws=100_000, seed=2)
    assert abs(alpha_spacetime(STORM, s, t, theta) - est) < 0.02


def test_invalid_set_parameters():
    with pytest.raises(DomainError):
        IntervalSetParams(24.0)
    with pytest.raises(DomainError):
        CylinderSetParams(**{**STORM.__dict__, "rho_V": 1.0})


@settings(max_examples=40, deadline=None)
@given(s=st.floats(0, 400), t=st.floats(0, 80), th=st.floats(0, 2 * np.pi))
def test_alpha_in_unit_interval(s, t, th):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        v = alpha_spacetime(STORM, s, t, th)
    assert 0.0 <= v <= 1.0


@settings(max_examples=40, deadline=None)
@given(mu=st.floats(0.5, 23.5), t=st.floats(0, 30))
def test_alpha_interval_in_unit_interval(mu, t):
    v = alpha_interval_1d(IntervalSetParams(mu), t)
    assert 0.0 <= v <= 1.0
