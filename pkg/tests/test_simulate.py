import numpy as np
import pytest
from scipy import stats

import stxtreme.simulate as sim
from stxtreme.correlation import ExpCorrParams, correlation
from stxtreme.empirical import censored_theta2_hat, frechet_threshold
from stxtreme.errors import DomainError, SimulationBudgetExceeded
from stxtreme.model import theta2
from stxtreme.randomset import alpha_interval_1d
from stxtreme.simulate import (SimConfig, simulate_ar1, simulate_gaussian, simulate_ma1,
                               simulate_replicates, simulate_schlather_randomset)

FRECHET = stats.invweibull(1).cdf


def frechet_ks(x):
    return stats.kstest(x, FRECHET).pvalue


# ---------------------------------------------------------------- Gaussian fields

def test_gaussian_single_point_is_standard_normal():
    corr = ExpCorrParams(4.0)
    x = [simulate_gaussian(corr, np.array([0.0]), seed=s)[0] for s in range(10_000)]
    assert stats.kstest(x, "norm").pvalue > 0.01


def test_gaussian_coincident_points_identical():
    corr = ExpCorrParams(4.0)
    pts = np.array([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])
    for s in range(20):
        z = simulate_gaussian(corr, pts, seed=s)
        assert z[0] == pytest.approx(z[1], abs=1e-12)


def test_gaussian_empirical_correlation():
    corr = ExpCorrParams(4.0)
    t = np.array([0.0, 1.0, 3.0, 10.0])
    draws = np.array([simulate_gaussian(corr, t, seed=s) for s in range(10_000)])
    target = correlation(corr, 0.0, np.abs(t[:, None] - t[None, :]))
    np.testing.assert_allclose(np.corrcoef(draws.T), target, atol=0.02)


def test_gaussian_spacetime_points(spacetime_model):
    pts = np.array([[0.0, 0.0, 0.0], [30.0, 10.0, 1.0], [-20.0, 5.0, 2.0]])
    draws = np.array([simulate_gaussian(spacetime_model.corr, pts, seed=s)
                      for s in range(5000)])
    ds = np.hypot(*(pts[:, None, :2] - pts[None, :, :2]).transpose(2, 0, 1))
    dt = np.abs(pts[:, None, 2] - pts[None, :, 2])
    target = correlation(spacetime_model.corr, ds, dt)
    np.testing.assert_allclose(np.corrcoef(draws.T), target, atol=0.03)


def test_gaussian_not_psd_raises(monkeypatch):
    monkeypatch.setattr(sim, "_corr_matrix", lambda c, p: np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(DomainError):
        simulate_gaussian(ExpCorrParams(1.0), np.array([0.0, 1.0]), seed=0)


def test_gaussian_point_limit():
    with pytest.raises(ValueError):
        simulate_gaussian(ExpCorrParams(1.0), np.arange(sim.MAX_DENSE_POINTS + 1.0))


# ---------------------------------------------------------------- config

@pytest.mark.parametrize("kw", [{"eps_sim": 0.2}, {"eps_sim": 0.0}, {"M": 2.5},
                                {"n_times": 0}])
def test_simconfig_invariants(kw):
    with pytest.raises(ValueError):
        SimConfig(**kw)


def test_cylinder_needs_coordinates(spacetime_model):
    with pytest.raises(ValueError):
        simulate_schlather_randomset(spacetime_model, SimConfig(n_times=10))


def test_budget_guard(model_1d):
    with pytest.raises(SimulationBudgetExceeded):
        simulate_schlather_randomset(model_1d, SimConfig(n_times=201, seed=0, max_storms=100))


# ---------------------------------------------------------------- 1-D random-set process

@pytest.fixture(scope="module")
def short_reps(model_1d):
    return [r.panel.z[0] for r in simulate_replicates(model_1d, SimConfig(n_times=201), 1000,
                                                       seed=11)]


def test_margins_unit_frechet(short_reps):
    z = np.array(short_reps)
    for t in (0, 50, 100, 150, 200):
        assert frechet_ks(z[:500, t]) > 0.01


def test_boundary_matches_interior(short_reps):
    z = np.array(short_reps)
    for t in (0, 200):
        assert stats.ks_2samp(z[:, t], z[:, 100]).pvalue > 0.01


def test_max_stability(short_reps):
    z = np.array(short_reps)[:, 100]
    maxima = z.reshape(100, 10).max(axis=1) / 10
    assert stats.ks_2samp(maxima, z).pvalue > 0.01
    assert frechet_ks(maxima) > 0.01


def test_pairwise_coefficient_matches_formula(model_1d):
    reps = simulate_replicates(model_1d, SimConfig(n_times=2001), 100, seed=3)
    z = np.concatenate([r.panel.z[0] for r in reps])
    blocks = np.repeat(np.arange(len(reps)), 2001)
    u = frechet_threshold(0.9)
    lam = model_1d.corr.lam
    for h in (1, 4, 10, 30):
        est = censored_theta2_hat(z, z, h, u, blocks)
        target = theta2(np.exp(-h / lam), alpha_interval_1d(model_1d.set, h))
        assert est.contains(target), (h, est, target)


def test_zero_distance_pair_comonotone(model_1d):
    cfg = SimConfig(n_times=2001, coords=np.zeros((2, 2)), seed=4)
    z = simulate_schlather_randomset(model_1d, cfg).panel.z
    # equal up to rounding in the square root of a rank-deficient window matrix
    np.testing.assert_allclose(z[0], z[1], rtol=1e-5)
    est = censored_theta2_hat(z[0], z[1], 0, frechet_threshold(0.9))
    assert est.value == pytest.approx(1.0, abs=0.05)
    assert est.contains(1.0)


def test_reproducible(model_1d):
    cfg = SimConfig(n_times=501, seed=123)
    a = simulate_schlather_randomset(model_1d, cfg).panel.z
    b = simulate_schlather_randomset(model_1d, cfg).panel.z
    c = simulate_schlather_randomset(model_1d, SimConfig(n_times=501, seed=124)).panel.z
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_replicates_independent_of_workers(model_1d):
    cfg = SimConfig(n_times=301)
    one = simulate_replicates(model_1d, cfg, 4, seed=9, workers=1)
    two = simulate_replicates(model_1d, cfg, 4, seed=9, workers=2)
    for a, b in zip(one, two):
        assert np.array_equal(a.panel.z, b.panel.z)


def test_diagnostics_reported(model_1d):
    d = simulate_schlather_randomset(model_1d, SimConfig(n_times=201, seed=1)).diagnostics
    assert d["approximate"] is True
    assert d["stop_bound"] < d["eps_sim"] * d["min_z"]
    assert d["gaussian_exceed_prob"] == pytest.approx(stats.norm.sf(4.0))
    assert d["n_gaussian_draws"] <= d["n_relevant_storms"] <= d["n_storms"]


# ---------------------------------------------------------------- space-time process

def path_distance(cx, cy, vx, vy, box, n_tau=4001):
    """Smallest distance from the moving centre to the box, on a fine grid of the path."""
    tau = np.linspace(0.0, 1.0, n_tau)
    (x0, y0), (x1, y1) = box
    px, py = cx + tau * vx, cy + tau * vy
    ex = np.maximum(np.maximum(x0 - px, px - x1), 0.0)
    ey = np.maximum(np.maximum(y0 - py, py - y1), 0.0)
    return np.hypot(ex, ey).min()


@pytest.mark.parametrize("box,R,v", [
    (((0.0, 0.0), (0.0, 0.0)), 10.0, (0.0, 0.0)),
    (((0.0, 0.0), (100.0, 40.0)), 25.0, (-200.0, 70.0)),
    (((5.0, 5.0), (5.0, 30.0)), 3.0, (0.0, 50.0)),
    (((0.0, 0.0), (50.0, 50.0)), 40.0, (120.0, -30.0)),
])
def test_reach_region(box, R, v):
    rng = np.random.default_rng(0)
    lo = np.array(box[0]) - R - np.abs(v)
    hi = np.array(box[1]) + R + np.abs(v)
    n = 400_000
    x, y = rng.uniform(lo[0], hi[0], n), rng.uniform(lo[1], hi[1], n)
    full = np.full(n, 1.0)
    hit = sim.reaches_box(x, y, v[0] * full, v[1] * full, R * full, box)
    for i in range(500):
        d = path_distance(x[i], y[i], v[0], v[1], box)
        if abs(d - R) > 1e-3 * R:
            assert hit[i] == (d <= R)
    area = np.prod(hi - lo)
    f = hit.mean()
    se = area * np.sqrt(f * (1 - f) / n)
    assert abs(f * area - sim.reach_area(box, R, *v)) < 4 * se


def test_drift_asymmetry():
    from dataclasses import replace
    from stxtreme.correlation import GneitingCorrParams
    from stxtreme.empirical import coefficient_panel
    from stxtreme.likelihood import SpaceTimePanel
    from stxtreme.model import SchlatherModelParams
    from stxtreme.randomset import CylinderSetParams
    # compact storms drifting west to east at (33, 11) km/hr; long-range correlation
    storm = CylinderSetParams(m_R=25.0, k_R=4.0, m_V1=33.0, m_V2=11.0, var_V1=6.0,
                              var_V2=6.0, rho_V=0.0, m_D=6.0, k_D=4.0)
    corr = GneitingCorrParams(alpha_s=np.log(300.0), alpha_t=np.log(30.0), beta_s=0.98,
                              beta_t=1.0, gamma=0.99)
    model = SchlatherModelParams(corr, storm)
    coords = np.array([[0.0, 0.0], [33.0, 11.0]])
    reps = simulate_replicates(model, SimConfig(n_times=1000, coords=coords), 5, seed=1)
    panel = SpaceTimePanel(np.concatenate([r.panel.z for r in reps], axis=1), coords,
                           np.repeat(np.arange(5), 1000), reps[0].panel.station_ids)
    grid = coefficient_panel(panel, range(3), quantile=0.9)
    east_after_west, west_after_east = grid.cells[(1, 0)], grid.cells[(0, 1)]
    assert east_after_west[0].value == west_after_east[0].value
    # the storm carries dependence downwind one hour later: a dip in one orientation only
    assert east_after_west[1].value < east_after_west[0].value
    assert west_after_east[1].value > west_after_east[0].value
    assert east_after_west[1].ci_upper < west_after_east[1].ci_lower
    d = coords[1] - coords[0]
    s, th = np.hypot(*d), np.arctan2(d[1], d[0])
    assert east_after_west[1].contains(float(theta2(model.rho(s, 1), model.alpha(s, 1, th))))


def test_spacetime_margins_boundary_and_centre(spacetime_model):
    coords = np.array([[0.0, 0.0], [100.0, 0.0], [0.0, 100.0], [100.0, 100.0], [50.0, 50.0]])
    cfg = SimConfig(n_times=10, coords=coords, mark_quantile=0.999)
    z = np.array([r.panel.z[:, 5] for r in simulate_replicates(spacetime_model, cfg, 80,
                                                                 seed=21)])
    corner, centre = z[:, :4].ravel(), z[:, 4]
    assert frechet_ks(centre) > 0.01
    assert frechet_ks(z[:, 0]) > 0.01
    assert stats.ks_2samp(corner, centre).pvalue > 0.01


# ---------------------------------------------------------------- AR(1) / MA(1)

def acf(x, k):
    x = x - x.mean()
    return float(np.dot(x[:-k], x[k:]) / np.dot(x, x))


def test_ar1_white_noise():
    T = 20_000
    x = simulate_ar1(0.0, 1.0, 0.0, T, seed=1)
    assert abs(acf(x, 1)) < 3 / np.sqrt(T)


def test_ar1_acf():
    T = 100_000
    x = simulate_ar1(0.6, 1.0, 2.0, T, seed=2)
    assert x.mean() == pytest.approx(2.0, abs=0.05)
    assert x.var() == pytest.approx(1 / (1 - 0.36), rel=0.03)
    for k in range(1, 6):
        # Bartlett standard error of the lag-k autocorrelation
        se = np.sqrt((1 + 0.36) / (1 - 0.36) / T)
        assert acf(x, k) == pytest.approx(0.6**k, abs=4 * se)


def test_ar1_stationary_start():
    x0 = [simulate_ar1(0.9, 1.0, 0.0, 2, seed=s)[0] for s in range(4000)]
    assert np.var(x0) == pytest.approx(1 / (1 - 0.81), rel=0.1)


def test_ma1_acf():
    T = 100_000
    x = simulate_ma1(0.6, 1.0, 0.0, T, seed=3)
    se = 2 / np.sqrt(T)
    assert acf(x, 1) == pytest.approx(0.6 / 1.36, abs=4 * se)
    assert abs(acf(x, 2)) < 4 * se


@pytest.mark.parametrize("f", [simulate_ar1, simulate_ma1])
@pytest.mark.parametrize("lam,sigma", [(1.0, 1.0), (-1.2, 1.0), (0.5, 0.0)])
def test_series_validation(f, lam, sigma):
    with pytest.raises(ValueError):
        f(lam, sigma, 0.0, 10)
