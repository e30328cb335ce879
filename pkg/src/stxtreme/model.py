"""Bivariate exponent measure, censored pair density and extremal coefficients.

The exponent measure of the random-set Schlather model is written in terms
of the reciprocals ``x = 1/z``::

    V(z1, z2) = (1 - a/2)(x1 + x2) + (a/2) sqrt(x1^2 + x2^2 - 2 rho x1 x2)

which is the usual form rearranged; it is finite at ``z = inf``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from ._seeds import seed_sequence
from .correlation import ExpCorrParams, GneitingCorrParams, correlation
from .errors import DomainError, EvaluationError
from .randomset import (CylinderSetParams, IntervalSetParams, alpha, lens_area,
                        sample_cylinder_marks)

SQRT_2PI = np.sqrt(2 * np.pi)


@dataclass(frozen=True)
class SchlatherModelParams:
    corr: Union[GneitingCorrParams, ExpCorrParams]
    set: Union[CylinderSetParams, IntervalSetParams]

    def rho(self, s_norm, t):
        return correlation(self.corr, s_norm, t)

    def alpha(self, s_norm, t, theta=0.0):
        return alpha(self.set, s_norm, t, theta)


@dataclass(frozen=True)
class PairGeometry:
    s_norm: float = 0.0
    t: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        if self.s_norm < 0 or self.t < 0:
            raise DomainError("pair lags must be nonnegative")


def _check_rho_alpha(rho, alpha):
    if np.any(np.asarray(rho) <= -1) or np.any(np.asarray(rho) > 1):
        raise DomainError("correlation must lie in (-1, 1]")
    if np.any(np.asarray(alpha) < 0) or np.any(np.asarray(alpha) > 1):
        raise DomainError("overlap coefficient must lie in [0, 1]")


def _root(x1, x2, rho):
    w2 = x1**2 + x2**2 - 2 * rho * x1 * x2
    if np.any(w2 < -1e-12 * (x1**2 + x2**2)):
        raise DomainError("square-root argument of the exponent measure is negative")
    return np.sqrt(np.maximum(w2, 0.0))


def V2(z1, z2, rho, alpha):
    """Bivariate exponent measure of the random-set Schlather model."""
    _check_rho_alpha(rho, alpha)
    x1 = 1.0 / np.asarray(z1, dtype=float)
    x2 = 1.0 / np.asarray(z2, dtype=float)
    w = _root(x1, x2, rho)
    return (1 - alpha / 2) * (x1 + x2) + (alpha / 2) * w


def V2_partials(z1, z2, rho, alpha):
    """Return V, dV/dz1, dV/dz2 and d2V/dz1dz2 in closed form."""
    x1 = 1.0 / np.asarray(z1, dtype=float)
    x2 = 1.0 / np.asarray(z2, dtype=float)
    w = _root(x1, x2, rho)
    half = alpha / 2
    v = (1 - half) * (x1 + x2) + half * w
    v1 = -x1**2 * ((1 - half) + half * (x1 - rho * x2) / w)
    v2 = -x2**2 * ((1 - half) + half * (x2 - rho * x1) / w)
    v12 = -half * (1 - rho**2) * (x1 * x2) ** 3 / w**3
    return v, v1, v2, v12


def theta2(rho, alpha):
    """Pairwise extremal coefficient V2(1, 1)."""
    rho = np.asarray(rho, dtype=float)
    return 2 - alpha * (1 - np.sqrt((1 - rho) / 2))


def censored_pair_logdens(z1, z2, u, rho, alpha):
    """Vectorized log censored pair likelihood.

    Observations at or below ``u`` are censored.  ``rho`` and ``alpha``
    broadcast against the observations.  No finiteness check is made here.
    """
    z1, z2, rho, alpha = np.broadcast_arrays(
        np.asarray(z1, dtype=float), np.asarray(z2, dtype=float),
        np.asarray(rho, dtype=float), np.asarray(alpha, dtype=float))
    e1 = z1 > u
    e2 = z2 > u
    x1 = np.where(e1, 1.0 / z1, 1.0 / u)
    x2 = np.where(e2, 1.0 / z2, 1.0 / u)
    w2 = x1**2 + x2**2 - 2 * rho * x1 * x2
    w = np.sqrt(np.maximum(w2, 0.0))
    half = alpha / 2
    v = (1 - half) * (x1 + x2) + half * w
    with np.errstate(divide="ignore", invalid="ignore"):
        p1 = (1 - half) + half * (x1 - rho * x2) / w
        p2 = (1 - half) + half * (x2 - rho * x1) / w
        cross = half * (1 - rho**2) * x1 * x2 / w**3
        both = 2 * np.log(x1) + 2 * np.log(x2) + np.log(p1 * p2 + cross)
        only1 = 2 * np.log(x1) + np.log(p1)
        only2 = 2 * np.log(x2) + np.log(p2)
    out = -v
    out = out + np.where(e1 & e2, both, 0.0)
    out = out + np.where(e1 & ~e2, only1, 0.0)
    out = out + np.where(~e1 & e2, only2, 0.0)
    return out


def censored_pair_loglik(z1, z2, u, g: PairGeometry, p: SchlatherModelParams):
    """Log censored likelihood of one pair on the unit Fréchet scale.

    The four branches are the joint density (both above ``u``), the two
    partially censored derivatives, and the censored mass ``exp(-V(u, u))``.
    """
    if not u > 0:
        raise DomainError("threshold must be positive")
    rho = float(p.rho(g.s_norm, g.t))
    a = float(p.alpha(g.s_norm, g.t, g.theta))
    _check_rho_alpha(rho, a)
    val = censored_pair_logdens(z1, z2, u, rho, a)
    if not np.all(np.isfinite(val)):
        raise EvaluationError("non-finite censored pair likelihood",
                              z1=z1, z2=z2, params=p, geometry=g)
    return float(val) if np.ndim(val) == 0 else val


# --------------------------------------------------------------------------
# trivariate coefficients


def _as_points(x1, x2, x3):
    pts = [np.atleast_1d(np.asarray(x, dtype=float)) for x in (x1, x2, x3)]
    if len({p.size for p in pts}) != 1 or pts[0].size not in (1, 3):
        raise ValueError("points must all be times (1D) or all (x, y, t) triples")
    return np.stack(pts)


def _point_lags(points):
    """Space-time lags of points 2 and 3 relative to point 1."""
    return points[1] - points[0], points[2] - points[0]


def triple_disc_area(R, centers):
    """Exact area of the intersection of three equal discs.

    ``R`` has shape (n,), ``centers`` shape (n, 3, 2).  The area is obtained
    from Green's theorem along the boundary arcs of each circle that lie
    inside the other two discs.
    """
    R = np.asarray(R, dtype=float)
    c = np.asarray(centers, dtype=float)
    n = R.size
    diff = c[:, :, None, :] - c[:, None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    d12, d13, d23 = dist[:, 0, 1], dist[:, 0, 2], dist[:, 1, 2]
    tiny = 1e-12 * R
    out = np.zeros(n)
    empty = (d12 >= 2 * R) | (d13 >= 2 * R) | (d23 >= 2 * R)

    same12, same13, same23 = d12 <= tiny, d13 <= tiny, d23 <= tiny
    all_same = same12 & same13
    out[all_same] = np.pi * R[all_same] ** 2
    case = ~all_same & same12
    out[case] = lens_area(R[case], d13[case])
    case = ~all_same & ~same12 & same13
    out[case] = lens_area(R[case], d12[case])
    case = ~all_same & ~same12 & ~same13 & same23
    out[case] = lens_area(R[case], d12[case])
    general = ~(same12 | same13 | same23) & ~empty
    if not np.any(general):
        out[empty] = 0.0
        return out

    Rg = R[general]
    cg = c[general]
    dg = dist[general]
    total = np.zeros(Rg.size)
    two_pi = 2 * np.pi
    for i in range(3):
        j, k = [m for m in range(3) if m != i]
        starts, lengths = [], []
        for m in (j, k):
            dv = cg[:, m] - cg[:, i]
            phi = np.arctan2(dv[:, 1], dv[:, 0])
            half = np.arccos(np.clip(dg[:, i, m] / (2 * Rg), 0.0, 1.0))
            starts.append(phi - half)
            lengths.append(2 * half)
        off = np.mod(starts[1] - starts[0], two_pi)
        lo = np.where(off < lengths[0], off, 0.0)
        hi = np.where(off < lengths[0], np.minimum(lengths[0], off + lengths[1]),
                      np.minimum(lengths[0], off - two_pi + lengths[1]))
        span = np.maximum(hi - lo, 0.0)
        a = starts[0] + lo
        b = a + span
        cx, cy = cg[:, i, 0], cg[:, i, 1]
        total += 0.5 * (Rg**2 * span
                        + Rg * (cx * (np.sin(b) - np.sin(a))
                                - cy * (np.cos(b) - np.cos(a))))
    out[general] = np.maximum(total, 0.0)
    out[empty] = 0.0
    return out


PATTERNS = ("23|1", "2-3|1", "-23|1", "-2-3|1", "-13|2", "-1-3|2", "-1-2|3")


def _pattern_volumes(single, v12, v13, v23, v123):
    return {
        "23|1": v123,
        "2-3|1": v12 - v123,
        "-23|1": v13 - v123,
        "-2-3|1": single - v12 - v13 + v123,
        "-13|2": v23 - v123,
        "-1-3|2": single - v12 - v23 + v123,
        "-1-2|3": single - v13 - v23 + v123,
    }


def _set_volumes(set_params, lag2, lag3, n_draws, rng):
    """Per-draw volumes of single, pairwise and triple set intersections."""
    t = np.array([0.0, lag2[-1], lag3[-1]])
    if isinstance(set_params, IntervalSetParams):
        D = 24.0 * rng.beta(10.0, set_params.beta_b, size=n_draws)
        area1 = area12 = area13 = area23 = area123 = np.ones(n_draws)
    elif isinstance(set_params, CylinderSetParams):
        if lag2.size != 3:
            raise ValueError("cylinder sets need (x, y, t) points")
        R, V, D = sample_cylinder_marks(set_params, n_draws, rng)
        # relative disc centres at a common absolute time
        cen = np.stack([V * t[m] - np.array([0.0, 0.0] if m == 0 else
                                            (lag2 if m == 1 else lag3)[:2])
                        for m in range(3)], axis=1)
        area1 = np.pi * R**2
        area12 = lens_area(R, np.hypot(*(cen[:, 0] - cen[:, 1]).T))
        area13 = lens_area(R, np.hypot(*(cen[:, 0] - cen[:, 2]).T))
        area23 = lens_area(R, np.hypot(*(cen[:, 1] - cen[:, 2]).T))
        area123 = triple_disc_area(R, cen)
    else:
        raise TypeError(f"unknown set parameters {type(set_params).__name__}")

    def dur(span):
        return np.maximum(D - span, 0.0)

    single = area1 * D
    v12 = area12 * dur(abs(t[1] - t[0]))
    v13 = area13 * dur(abs(t[2] - t[0]))
    v23 = area23 * dur(abs(t[2] - t[1]))
    v123 = area123 * dur(t.max() - t.min())
    return single, v12, v13, v23, v123


def trivariate_set_probs(set_params, lags, n_draws: int = 100_000, seed=None):
    """Conditional inclusion probabilities of three points in the random set.

    ``lags`` holds the pairwise lags ``(x2 - x1, x3 - x1, x3 - x2)``, each a
    time (interval sets) or an ``(x, y, t)`` triple (cylinders).  Returns a
    dict keyed by pattern, e.g. ``"2-3|1"`` for Pr(x2 in B, x3 not in B | x1 in
    B), with ``(estimate, standard_error)`` values.
    """
    h12, h13, h23 = (np.atleast_1d(np.asarray(h, dtype=float)) for h in lags)
    if not np.allclose(h23, h13 - h12, atol=1e-9):
        raise ValueError("inconsistent lags: x3 - x2 must equal (x3 - x1) - (x2 - x1)")
    rng = np.random.default_rng(seed)
    vols = _set_volumes(set_params, h12, h13, n_draws, rng)
    single = vols[0]
    den = single.mean()
    out = {}
    for key, vol in _pattern_volumes(*vols).items():
        est = vol.sum() / single.sum()
        se = np.sqrt(np.var(vol - est * single, ddof=1) / n_draws) / den
        out[key] = (float(est), float(se))
    return out


def gaussian_max_coefficient(corr_matrix, n_draws: int = 100_000, seed=None):
    """MC estimate of sqrt(2 pi) E max(0, eps_1, ..., eps_k) with its SE.

    Uses the mean of ``sqrt(2 pi) max(0, eps_i)``, whose expectation is one,
    as a regression control variate; the estimate is exact for perfectly
    correlated components.
    """
    c = np.asarray(corr_matrix, dtype=float)
    w, v = np.linalg.eigh(c)
    if w.min() < -1e-8:
        raise DomainError("correlation matrix is not positive semidefinite")
    root = v * np.sqrt(np.clip(w, 0.0, None))
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal((n_draws, c.shape[0])) @ root.T
    m = SQRT_2PI * np.maximum(eps.max(axis=1), 0.0)
    cv = SQRT_2PI * np.maximum(eps, 0.0).mean(axis=1)
    dc = cv - cv.mean()
    b = np.dot(m - m.mean(), dc) / np.dot(dc, dc)
    adj = m - b * (cv - 1.0)
    return float(adj.mean()), float(adj.std(ddof=1) / np.sqrt(n_draws))


def _point_corr(p: SchlatherModelParams, a, b):
    if a.size == 1:
        return float(p.rho(0.0, abs(b[0] - a[0])))
    return float(p.rho(np.hypot(*(b[:2] - a[:2])), abs(b[2] - a[2])))


def theta3_mc(p: SchlatherModelParams, x1, x2, x3, n_draws: int = 100_000, seed=None):
    """Trivariate extremal coefficient of the random-set model by simulation.

    Combines the seven set-inclusion probabilities with the Gaussian
    coefficients: the three-point term by Monte Carlo, pairwise terms exactly
    via ``theta2(rho, 1)``.  Points are times (1D) or (x, y, t).
    Returns ``(estimate, standard_error)``.
    """
    if n_draws < 10_000:
        raise ValueError("n_draws must be at least 1e4")
    pts = _as_points(x1, x2, x3)
    ss = seed_sequence(seed)
    set_seed, gauss_seed = ss.spawn(2)
    rho = np.eye(3)
    for i in range(3):
        for j in range(i + 1, 3):
            rho[i, j] = rho[j, i] = _point_corr(p, pts[i], pts[j])
    eta123, eta123_se = gaussian_max_coefficient(rho, n_draws, gauss_seed)
    eta = {k: float(theta2(rho[i, j], 1.0)) for k, (i, j) in
           {"12": (0, 1), "13": (0, 2), "23": (1, 2)}.items()}

    lag2, lag3 = _point_lags(pts)
    rng = np.random.default_rng(set_seed)
    vols = _set_volumes(p.set, lag2, lag3, n_draws, rng)
    single = vols[0]
    pv = _pattern_volumes(*vols)
    weights = {"23|1": eta123, "2-3|1": eta["12"], "-23|1": eta["13"],
               "-13|2": eta["23"], "-2-3|1": 1.0, "-1-3|2": 1.0, "-1-2|3": 1.0}
    contrib = sum(weights[k] * pv[k] for k in PATTERNS)
    est = contrib.sum() / single.sum()
    var_sets = np.var(contrib - est * single, ddof=1) / n_draws / single.mean() ** 2
    p123 = pv["23|1"].sum() / single.sum()
    se = np.sqrt(var_sets + (p123 * eta123_se) ** 2)
    return float(est), float(se)
