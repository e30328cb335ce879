"""Simulation of Gaussian fields, the random-set Schlather process and AR/MA series.

The max-stable simulator uses the spectral representation

    Z(x) = sup_i xi_i sqrt(2 pi) max{0, eps_i(x - X_i)} 1_B_i(x - X_i) / E|B|

over a Poisson process with intensity xi^-2 dxi dX.  Only storms whose set
can reach the observation grid matter.  For marks ``m`` these have centres
in a region ``A(m)`` of volume ``|A(m)|``; writing ``xi = zeta |A(m)|`` the
relevant storms are ``zeta_i = 1/Gamma_i`` (unit-rate arrivals) with marks
drawn from their own law and centres uniform on ``A(m_i)``.  This is exact
for unbounded marks; only the stopping rule needs a cap on ``|A(m)|``.
For moving discs ``A(m)`` is the bounding box of the stations dilated by
the disc and by the storm path, times the start times that overlap the
record.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, signal, stats

from ._seeds import seed_sequence
from .correlation import correlation
from .errors import DomainError, SimulationBudgetExceeded
from .likelihood import SpaceTimePanel
from .model import SchlatherModelParams
from .randomset import (BETA_A, INTERVAL_SPAN, CylinderSetParams, IntervalSetParams,
                        sample_cylinder_marks)

SQRT_2PI = np.sqrt(2 * np.pi)
MAX_DENSE_POINTS = 5000
BATCH = 4096
MAX_BATCH = 65536


def simulate_gaussian(corr, points, seed=None) -> np.ndarray:
    """Zero-mean unit-variance Gaussian draw at ``points``.

    ``points`` is an (n, 3) array of (x, y, t) or an (n,) array of times.
    Uses the symmetric square root of the correlation matrix with
    eigenvalues above -1e-10 clipped to zero.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = np.column_stack([np.zeros((pts.size, 2)), pts])
    n = pts.shape[0]
    if n > MAX_DENSE_POINTS:
        raise ValueError(f"at most {MAX_DENSE_POINTS} points supported, got {n}")
    c = _corr_matrix(corr, pts)
    root = _sqrt_psd(c)
    rng = np.random.default_rng(seed)
    return root @ rng.standard_normal(n)


def _corr_matrix(corr, pts):
    ds = np.hypot(pts[:, None, 0] - pts[None, :, 0], pts[:, None, 1] - pts[None, :, 1])
    dt = np.abs(pts[:, None, 2] - pts[None, :, 2])
    return correlation(corr, ds, dt)


def _sqrt_psd(c):
    w, v = linalg.eigh(c)
    if w.min() < -1e-10:
        raise DomainError(f"correlation matrix not PSD (min eigenvalue {w.min():.3g})")
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


@dataclass(frozen=True)
class SimConfig:
    """Simulation grid and truncation settings.

    ``coords`` of ``None`` simulates a single series at integer times
    ``0..n_times-1``.  ``mark_quantile`` caps the marks used in the stopping
    bound for cylinder sets (the interval-set bound is exact).
    """

    n_times: int = 2001
    coords: np.ndarray = None
    seed: int = None
    eps_sim: float = 0.1
    M: float = 4.0
    max_storms: int = 1_000_000
    mark_quantile: float = 1 - 1e-4
    block_labels: np.ndarray = field(default=None, compare=False)

    def __post_init__(self):
        if not 0 < self.eps_sim <= 0.1:
            raise ValueError("eps_sim must lie in (0, 0.1]")
        if not self.M >= 3:
            raise ValueError("the Gaussian sup bound M must be at least 3")
        if self.n_times < 1:
            raise ValueError("n_times must be positive")


@dataclass
class SimResult:
    panel: SpaceTimePanel
    diagnostics: dict


class _Storms:
    """Marks of a batch of storms; start times and centres are drawn only when needed."""

    def __init__(self, D, V=None, R=None):
        self.D, self.V, self.R = D, V, R


def _interval_storms(p: IntervalSetParams, n, T, rng):
    D = INTERVAL_SPAN * rng.beta(BETA_A, p.beta_b, size=n)
    return _Storms(D), (T - 1) + D


def _start_times(D, T, rng):
    return -D + rng.uniform(size=D.size) * ((T - 1) + D)


def reach_area(box, R, vx, vy):
    """Area of the centres from which a disc of radius R moving by (vx, vy) meets ``box``.

    This is the Minkowski sum of the box, the disc and the segment, a convex
    set whose area follows from Steiner's formula.
    """
    (x0, y0), (x1, y1) = box
    w, h = x1 - x0, y1 - y0
    ax, ay = np.abs(vx), np.abs(vy)
    return (w * h + 2 * R * (w + h) + np.pi * R**2 + ay * w + ax * h
            + 2 * R * np.hypot(vx, vy))


def _segment_hits_rect(px, py, dx, dy, lo, hi):
    """Whether segments p + tau d, tau in [0, 1], meet the rectangle [lo, hi]."""
    tmin = np.zeros_like(px)
    tmax = np.ones_like(px)
    for p0, d, a, b in ((px, dx, lo[0], hi[0]), (py, dy, lo[1], hi[1])):
        with np.errstate(divide="ignore", invalid="ignore"):
            t1, t2 = (a - p0) / d, (b - p0) / d
        still = d == 0
        inside = (p0 >= a) & (p0 <= b)
        tmin = np.maximum(tmin, np.where(still, np.where(inside, 0.0, 2.0),
                                         np.minimum(t1, t2)))
        tmax = np.minimum(tmax, np.where(still, np.where(inside, 1.0, -1.0),
                                         np.maximum(t1, t2)))
    return tmin <= tmax


def _segment_hits_disc(px, py, dx, dy, qx, qy, R):
    d2 = dx * dx + dy * dy
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = np.where(d2 > 0, ((qx - px) * dx + (qy - py) * dy) / d2, 0.0)
    tau = np.clip(tau, 0.0, 1.0)
    return np.hypot(px + tau * dx - qx, py + tau * dy - qy) <= R


def reaches_box(cx, cy, vx, vy, R, box):
    """Whether a disc of radius R centred at c and moving by v ever meets ``box``."""
    (x0, y0), (x1, y1) = box
    hit = _segment_hits_rect(cx, cy, vx, vy, (x0 - R, y0), (x1 + R, y1))
    hit |= _segment_hits_rect(cx, cy, vx, vy, (x0, y0 - R), (x1, y1 + R))
    for qx, qy in ((x0, y0), (x0, y1), (x1, y0), (x1, y1)):
        hit |= _segment_hits_disc(cx, cy, vx, vy, qx, qy, R)
    return hit


def _cylinder_storms(p: CylinderSetParams, n, T, box, rng):
    R, V, D = sample_cylinder_marks(p, n, rng)
    vol = reach_area(box, R, V[:, 0] * D, V[:, 1] * D) * ((T - 1) + D)
    return _Storms(D, V, R), vol


def _cylinder_centres(R, vx, vy, box, rng):
    """Centres (at the storm start) uniform on the reach region, by rejection.

    Candidates come from the bounding box of the region.
    """
    (x0, y0), (x1, y1) = box
    lo_x = x0 - R - np.maximum(vx, 0.0)
    hi_x = x1 + R - np.minimum(vx, 0.0)
    lo_y = y0 - R - np.maximum(vy, 0.0)
    hi_y = y1 + R - np.minimum(vy, 0.0)
    cx = np.empty(R.size)
    cy = np.empty(R.size)
    todo = np.arange(R.size)
    while todo.size:
        u = rng.uniform(size=(2, todo.size))
        x = lo_x[todo] + u[0] * (hi_x[todo] - lo_x[todo])
        y = lo_y[todo] + u[1] * (hi_y[todo] - lo_y[todo])
        ok = reaches_box(x, y, vx[todo], vy[todo], R[todo], box)
        cx[todo[ok]], cy[todo[ok]] = x[ok], y[ok]
        todo = todo[~ok]
    return np.column_stack([cx, cy])


def _volume_cap(p, T, box, q):
    """Upper bound on |A(m)| used by the stopping rule."""
    if isinstance(p, IntervalSetParams):
        return (T - 1) + INTERVAL_SPAN, 0.0
    R = stats.gamma.ppf(q, p.k_R, scale=p.m_R / p.k_R)
    D = stats.gamma.ppf(q, p.k_D, scale=p.m_D / p.k_D)
    zq = stats.norm.ppf(q)
    vx = (abs(p.m_V1) + zq * np.sqrt(p.var_V1)) * D
    vy = (abs(p.m_V2) + zq * np.sqrt(p.var_V2)) * D
    # the reach area is increasing in R, |vx| and |vy|
    cap = reach_area(box, R, vx, vy) * ((T - 1) + D)
    # union bound on the probability that a mark exceeds one of the caps
    return cap, 4 * (1 - q)


def _window_length(D):
    return int(np.ceil(np.max(D))) + 1 if D.size else 1


def simulate_schlather_randomset(p: SchlatherModelParams, cfg: SimConfig) -> SimResult:
    """Simulate the random-set Schlather process on a station x time grid.

    Storms are processed in order of decreasing ``zeta``; a storm is skipped
    without drawing its Gaussian field when ``amplitude * M`` cannot exceed
    the current minimum of ``Z`` over the points it covers.  Simulation stops
    once ``zeta * cap * sqrt(2 pi) M / E|B| < eps_sim * min Z``.  The result
    is approximate in two documented ways, reported in ``diagnostics``:
    Gaussian values above ``M`` are possible in skipped storms, and marks
    beyond the cap are possible after the stop.
    """
    T = cfg.n_times
    rng = np.random.default_rng(cfg.seed)
    cyl = isinstance(p.set, CylinderSetParams)
    if cfg.coords is None:
        coords = np.zeros((1, 2))
        if cyl:
            raise ValueError("cylinder sets need station coordinates")
    else:
        coords = np.asarray(cfg.coords, dtype=float).reshape(-1, 2)
    S = coords.shape[0]
    box = (coords.min(axis=0), coords.max(axis=0))
    mean_vol = p.set.mean_volume
    cap, cap_tail = _volume_cap(p.set, T, box, cfg.mark_quantile)
    scale = SQRT_2PI / mean_vol

    Z = np.zeros((S, T))
    chol_cache = {}

    def window_root(L):
        if L not in chol_cache:
            k = np.arange(L, dtype=float)
            pts = np.column_stack([np.repeat(coords, L, axis=0), np.tile(k, S)])
            chol_cache[L] = _sqrt_psd(_corr_matrix(p.corr, pts))
        return chol_cache[L]

    gamma = 0.0
    n_storms = n_live = n_drawn = 0
    stopped = False
    stop_bound = np.inf
    n_batch = BATCH
    while not stopped:
        n = n_batch
        gam = gamma + np.cumsum(rng.exponential(size=n))
        gamma = gam[-1]
        if cyl:
            st, vol = _cylinder_storms(p.set, n, T, box, rng)
        else:
            st, vol = _interval_storms(p.set, n, T, rng)
        amp = scale * vol / gam
        min_z = Z.min()
        bound = scale * cap * cfg.M / gam
        done = np.flatnonzero(bound < cfg.eps_sim * min_z)
        if done.size:
            n = int(done[0])
            stopped = True
            stop_bound = float(bound[n])
        n_storms += n
        # Z only grows, so storms below the grid minimum can never matter
        live = np.flatnonzero(amp[:n] * cfg.M >= min_z)
        n_live += live.size
        if n_live > cfg.max_storms:
            raise SimulationBudgetExceeded(
                f"more than {cfg.max_storms} relevant storms without meeting the stopping rule")
        # grow the batch while whole batches are irrelevant
        n_batch = BATCH if live.size else min(2 * n_batch, MAX_BATCH)
        if live.size == 0:
            continue
        D = st.D[live]
        start = _start_times(D, T, rng)
        if cyl:
            V, R = st.V[live], st.R[live]
            centre = _cylinder_centres(R, V[:, 0] * D, V[:, 1] * D, box, rng)
        first = np.ceil(start).astype(np.int64)
        L = _window_length(D)
        k = np.arange(L)
        tt = first[:, None] + k[None, :]
        t_ok = (tt <= (start + D)[:, None]) & (tt >= 0) & (tt < T)
        if cyl:
            dt = tt - start[:, None]
            cx = centre[:, 0, None] + V[:, 0, None] * dt
            cy = centre[:, 1, None] + V[:, 1, None] * dt
            dx = coords[None, :, 0, None] - cx[:, None, :]
            dy = coords[None, :, 1, None] - cy[:, None, :]
            cover = (np.hypot(dx, dy) <= R[:, None, None]) & t_ok[:, None, :]
        else:
            cover = np.broadcast_to(t_ok[:, None, :], (live.size, S, L))
        tc = np.clip(tt, 0, T - 1)
        zwin = Z[:, tc].transpose(1, 0, 2)
        zmin = np.where(cover, zwin, np.inf).min(axis=(1, 2))
        amp = amp[live]
        cand = np.flatnonzero(amp * cfg.M >= zmin)
        if cand.size == 0:
            continue
        root = window_root(L)
        eps = rng.standard_normal((cand.size, S * L)) @ root.T
        val = amp[cand, None, None] * np.maximum(eps.reshape(-1, S, L), 0.0)
        val = np.where(cover[cand], val, 0.0)
        n_drawn += cand.size
        si = np.broadcast_to(np.arange(S)[None, :, None], val.shape)
        ti = np.broadcast_to(tc[cand][:, None, :], val.shape)
        np.maximum.at(Z, (si.ravel(), ti.ravel()), val.ravel())

    if np.any(Z <= 0):
        raise SimulationBudgetExceeded("grid points left uncovered by any storm")
    diag = {
        "approximate": True,
        "n_storms": int(n_storms),
        "n_relevant_storms": int(n_live),
        "n_gaussian_draws": int(n_drawn),
        "stop_gamma": float(gamma),
        "stop_bound": stop_bound,
        "min_z": float(Z.min()),
        "eps_sim": cfg.eps_sim,
        "M": cfg.M,
        "gaussian_exceed_prob": float(stats.norm.sf(cfg.M)),
        "mark_cap_tail_prob": float(cap_tail),
    }
    ids = tuple(f"s{i}" for i in range(S))
    panel = SpaceTimePanel(Z, coords, cfg.block_labels, ids)
    return SimResult(panel, diag)


def spawn_seeds(seed, n: int) -> list:
    """Independent child seeds for replicate batches."""
    return seed_sequence(seed).spawn(n)


def simulate_replicates(p: SchlatherModelParams, cfg: SimConfig, n: int, seed=None,
                        workers: int = 1) -> list:
    """``n`` independent panels from child seeds of ``seed``."""
    from dataclasses import replace
    from concurrent.futures import ThreadPoolExecutor

    seeds = spawn_seeds(seed, n)
    run = (lambda s: simulate_schlather_randomset(p, replace(cfg, seed=s)))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(run, seeds))
    return [run(s) for s in seeds]


def _check_ts(lam, sigma):
    if not abs(lam) < 1:
        raise ValueError("|lambda| must be below 1")
    if not sigma > 0:
        raise ValueError("sigma must be positive")


def simulate_ar1(lam, sigma, mu, T, seed=None) -> np.ndarray:
    """Stationary AR(1): (Z_t - mu) = lam (Z_{t-1} - mu) + eps_t."""
    _check_ts(lam, sigma)
    rng = np.random.default_rng(seed)
    e = sigma * rng.standard_normal(T)
    e[0] /= np.sqrt(1 - lam**2)
    return mu + signal.lfilter([1.0], [1.0, -lam], e)


def simulate_ma1(lam, sigma, mu, T, seed=None) -> np.ndarray:
    """MA(1): (Z_t - mu) = eps_t + lam eps_{t-1}."""
    _check_ts(lam, sigma)
    rng = np.random.default_rng(seed)
    e = sigma * rng.standard_normal(T + 1)
    return mu + e[1:] + lam * e[:-1]
