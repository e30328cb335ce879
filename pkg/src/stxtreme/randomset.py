"""Random storm sets and their normalized expected self-overlap alpha(h).

Two set families are supported:

* ``CylinderSetParams`` -- a disc of Gamma radius moving at a Gaussian
  velocity for a Gamma duration, i.e. a tilted cylinder in space-time;
* ``IntervalSetParams`` -- an interval ``[0, D]`` on the time axis with
  ``D = 24 * Beta(10, 240/mu - 10)``.

``alpha(h) = E|B ∩ (h + B)| / E|B|``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special, stats

from .errors import DomainError, SurrogateWarning

N_ANGLES = 100
MAX_REFINE = 8
GH_NODES = 40
# lag velocities farther than this many velocity SDs use the Gauss-Hermite rule
FAR_SDS = 10.0
# time lags below this (hr) are treated as zero
MIN_LAG = 1e-9
MIN_VELOCITY_VARIANCE = 5.0
BETA_A = 10.0
INTERVAL_SPAN = 24.0


@dataclass(frozen=True)
class CylinderSetParams:
    """Tilted-cylinder storm: radius, velocity and duration laws.

    ``m_R`` (km) and ``m_D`` (hr) are Gamma means with shapes ``k_R`` and
    ``k_D``; the velocity (km/hr) is bivariate normal with mean
    ``(m_V1, m_V2)``, variances ``var_V1``, ``var_V2`` and correlation
    ``rho_V``.
    """

    m_R: float
    k_R: float
    m_V1: float
    m_V2: float
    var_V1: float
    var_V2: float
    rho_V: float
    m_D: float
    k_D: float

    def __post_init__(self):
        for name in ("m_R", "k_R", "m_D", "k_D", "var_V1", "var_V2"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive, got {getattr(self, name)}")
        if not -1 < self.rho_V < 1:
            raise DomainError(f"rho_V must lie in (-1, 1), got {self.rho_V}")

    @property
    def omega(self) -> np.ndarray:
        s1, s2 = np.sqrt(self.var_V1), np.sqrt(self.var_V2)
        c = self.rho_V * s1 * s2
        return np.array([[self.var_V1, c], [c, self.var_V2]])

    @property
    def det_omega(self) -> float:
        return self.var_V1 * self.var_V2 * (1.0 - self.rho_V**2)

    @property
    def mean_volume(self) -> float:
        """E|B| = pi E(R^2) E(D)."""
        return np.pi * self.m_R**2 * (1 + 1 / self.k_R) * self.m_D


@dataclass(frozen=True)
class IntervalSetParams:
    mu: float

    def __post_init__(self):
        if not 0 < self.mu < INTERVAL_SPAN:
            raise DomainError(f"mean duration must lie in (0, 24), got {self.mu}")

    @property
    def beta_b(self) -> float:
        return 240.0 / self.mu - BETA_A

    @property
    def mean_volume(self) -> float:
        return self.mu


# --------------------------------------------------------------------------
# geometry


def disc_overlap_area(R, d):
    """Linearized overlap area of two discs of radius R whose centres are d apart."""
    R = np.asarray(R, dtype=float)
    d = np.asarray(d, dtype=float)
    return np.pi * R**2 * np.maximum(0.0, 1.0 - d / (2 * R))


def lens_area(R, d):
    """Exact overlap area of two discs of radius R at centre distance d."""
    R = np.asarray(R, dtype=float)
    d = np.asarray(d, dtype=float)
    x = np.clip(d / (2 * R), 0.0, 1.0)
    return 2 * R**2 * (np.arccos(x) - x * np.sqrt(1 - x**2))


def effective_distance(s_norm, t, v, theta):
    """Distance between the storm centre and the second station after lag t.

    ``v`` is a velocity with components along its last axis (V1 west-east,
    V2 south-north); ``theta`` is the direction of the spatial lag measured
    from the west-east axis.
    """
    v = np.asarray(v, dtype=float)
    v1, v2 = v[..., 0], v[..., 1]
    s_norm = np.asarray(s_norm, dtype=float)
    t = np.asarray(t, dtype=float)
    sq = (s_norm**2 + t**2 * (v1**2 + v2**2)
          - 2 * s_norm * t * (v1 * np.cos(theta) + v2 * np.sin(theta)))
    return np.sqrt(np.maximum(sq, 0.0))


# --------------------------------------------------------------------------
# alpha for the cylinder


def alpha_given_velocity(p: CylinderSetParams, d_star):
    """Radius-averaged overlap given the velocity, as a function of d*."""
    d = np.asarray(d_star, dtype=float)
    scale = p.m_R / p.k_R
    x = d / (2 * scale)
    out = (special.gammaincc(p.k_R + 2, x)
           - d * p.k_R / (2 * (p.k_R + 1) * p.m_R) * special.gammaincc(p.k_R + 1, x))
    return np.clip(out, 0.0, 1.0)


def duration_factor(p: CylinderSetParams, t):
    """E{(D - t)+} / E(D) for Gamma distributed D."""
    t = np.abs(np.asarray(t, dtype=float))
    scale = p.m_D / p.k_D
    x = t / scale
    return np.clip(special.gammaincc(p.k_D + 1, x)
                   - t / p.m_D * special.gammaincc(p.k_D, x), 0.0, 1.0)


@dataclass(frozen=True)
class SurrogateFit:
    a: float
    rms: float
    radii: tuple
    warning: bool = False


def _velocity_spread(p: CylinderSetParams) -> float:
    return float(np.sqrt(np.linalg.eigvalsh(p.omega)[-1]))


def _design_radii(p, r_center):
    """Inner and outer ring radii for the surrogate design."""
    sv = _velocity_spread(p)
    r1 = np.maximum(r_center, sv)
    r2 = r_center + 3.0 * sv
    return r1, r2


def _surrogate_rate(p: CylinderSetParams, r_center, t):
    """Vectorized least-squares decay rates and residual RMS."""
    r_center = np.asarray(r_center, dtype=float)
    t = np.asarray(t, dtype=float)
    r1, r2 = _design_radii(p, r_center)
    # six points on each ring; the overlap is radial so each ring
    # contributes six identical residuals
    radii = np.stack([np.zeros_like(r1), r1, r2], axis=-1)
    weights = np.array([1.0, 6.0, 6.0])
    f = alpha_given_velocity(p, t[..., None] * radii)
    use = f > 1e-6
    logf = np.log(np.where(use, f, 1.0))
    num = np.sum(weights * use * radii * logf, axis=-1)
    den = np.sum(weights * use * radii**2, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        a = np.where(den > 0, -num / den, 0.0)
    a = np.maximum(a, 0.0)
    resid = np.exp(-a[..., None] * radii) - f
    rms = np.sqrt(np.sum(weights * resid**2, axis=-1) / weights.sum())
    return a, rms, radii


def fit_exponential_surrogate(p: CylinderSetParams, mu1, mu2, t) -> SurrogateFit:
    """Fit ``exp(-a |V - mu|)`` to the velocity-conditional overlap.

    ``(mu1, mu2) = s (cos theta, sin theta) / t`` is the velocity that carries
    a storm from the first station to the second in time ``t``.  The design
    has 13 velocities: ``mu`` itself and six points on each of two rings.
    """
    if not t > 0:
        raise DomainError("the surrogate is only defined for positive time lags")
    rc = float(np.hypot(mu1 - p.m_V1, mu2 - p.m_V2))
    a, rms, radii = _cached_surrogate(p, rc, float(t))
    bad = rms > 0.05
    if bad:
        warnings.warn(f"exponential surrogate residual RMS {rms:.3f} > 0.05",
                      SurrogateWarning, stacklevel=2)
    return SurrogateFit(a=a, rms=rms, radii=radii, warning=bad)


@lru_cache(maxsize=4096)
def _cached_surrogate(p, rc, t):
    a, rms, radii = _surrogate_rate(p, np.array(rc), np.array(t))
    return float(a), float(rms), tuple(float(r) for r in radii)


def _alpha_quadrature(p, a, mu1, mu2, n_angles):
    """Angular quadrature of E_V exp(-a |V - mu|) for Gaussian V (vectorized)."""
    xi = np.linspace(0.0, 2 * np.pi, n_angles, endpoint=False)
    c, s = np.cos(xi), np.sin(xi)
    v1, v2, rho = p.var_V1, p.var_V2, p.rho_V
    s1s2 = np.sqrt(v1 * v2)
    det = p.det_omega
    d1 = (np.asarray(mu1) - p.m_V1)[..., None]
    d2 = (np.asarray(mu2) - p.m_V2)[..., None]
    a = np.asarray(a)[..., None]
    A = c**2 * v2 + s**2 * v1 - 2 * c * s * s1s2 * rho
    B = (2 * c * d1 * v2 + 2 * s * d2 * v1
         - 2 * c * d2 * s1s2 * rho - 2 * s * d1 * s1s2 * rho)
    C = d1**2 * v2 + d2**2 * v1 - 2 * d1 * d2 * s1s2 * rho
    m = -B / (2 * A) - a * det / A
    sig2 = det / A
    sig = np.sqrt(sig2)
    # both terms assembled on the log scale to avoid overflow
    term1 = sig2 * np.exp(-C / (2 * det))
    log2 = (-(C / A - m**2) / (2 * sig2) + special.log_ndtr(m / sig)
            + np.log(np.sqrt(2 * np.pi) * sig))
    # radial integral of r exp(-a r - quadratic/(2 det)) over r > 0
    radial = term1 + m * np.exp(log2)
    # (1 / (2 pi sqrt(det))) times the angular integral
    return np.mean(radial, axis=-1) / np.sqrt(det)


def _alpha_gauss_hermite(p, a, mu1, mu2, n_nodes=GH_NODES):
    """Tensor Gauss-Hermite rule for E_V exp(-a |V - mu|) (vectorized).

    Accurate when ``mu`` lies well outside the velocity mass, where the
    integrand is smooth.
    """
    x, w = np.polynomial.hermite_e.hermegauss(n_nodes)
    w = w / w.sum()
    z1, z2 = np.meshgrid(x, x, indexing="ij")
    ww = np.outer(w, w).ravel()
    L = np.linalg.cholesky(p.omega)
    v1 = p.m_V1 + L[0, 0] * z1.ravel()
    v2 = p.m_V2 + L[1, 0] * z1.ravel() + L[1, 1] * z2.ravel()
    dist = np.hypot(v1 - np.asarray(mu1)[..., None], v2 - np.asarray(mu2)[..., None])
    return np.sum(ww * np.exp(-np.asarray(a)[..., None] * dist), axis=-1)


def alpha_spacetime(p: CylinderSetParams, s_norm, t, theta, n_angles: int = N_ANGLES):
    """Normalized expected overlap of the tilted cylinder at lag (s, t, theta).

    For ``t > 0`` the velocity expectation uses the exponential surrogate and
    an equispaced angular quadrature of at least ``n_angles`` points, doubled
    when the velocity distribution is narrow compared with its distance from
    the lag velocity s/t.  When that distance exceeds ten velocity SDs the
    integrand is smooth over the velocity mass and a Gauss-Hermite rule is
    used instead.  For ``t`` below 1e-9 the overlap does not depend on the
    velocity and is evaluated exactly.  The result is
    multiplied by the duration factor and clamped to [0, 1].
    """
    if not (p.var_V1 > MIN_VELOCITY_VARIANCE and p.var_V2 > MIN_VELOCITY_VARIANCE):
        raise DomainError("the angular quadrature needs velocity variances > 5")
    s_norm, t, theta = np.broadcast_arrays(
        np.asarray(s_norm, dtype=float), np.abs(np.asarray(t, dtype=float)),
        np.asarray(theta, dtype=float))
    if np.any(s_norm < 0):
        raise DomainError("spatial distance must be nonnegative")
    out = np.empty(s_norm.shape)
    still = t < MIN_LAG
    out[still] = alpha_given_velocity(p, s_norm[still])
    mv = ~still
    if np.any(mv):
        sm, tm, th = s_norm[mv], t[mv], theta[mv]
        mu1 = sm * np.cos(th) / tm
        mu2 = sm * np.sin(th) / tm
        rc = np.hypot(mu1 - p.m_V1, mu2 - p.m_V2)
        a, _, _ = _surrogate_rate(p, rc, tm)
        # the velocity mass subtends an angle ~ sd/rc seen from mu; refine
        # the equispaced grid (doubling) until it resolves that window
        sd_min = np.sqrt(np.linalg.eigvalsh(p.omega)[0])
        far = rc > FAR_SDS * _velocity_spread(p)
        need = 2 * np.pi * rc / sd_min
        level = np.maximum(0, np.ceil(np.log2(np.maximum(need / n_angles, 1.0))))
        level = np.minimum(level, MAX_REFINE).astype(int)
        vals = np.empty(sm.shape)
        if np.any(far):
            vals[far] = _alpha_gauss_hermite(p, a[far], mu1[far], mu2[far])
        for k in np.unique(level[~far]):
            sel = ~far & (level == k)
            vals[sel] = _alpha_quadrature(p, a[sel], mu1[sel], mu2[sel],
                                          n_angles * 2**k)
        out[mv] = vals
    raw = out * duration_factor(p, t)
    if np.any(raw < -1e-3):
        warnings.warn("negative overlap from the quadrature clamped to 0",
                      SurrogateWarning, stacklevel=2)
    res = np.clip(raw, 0.0, 1.0)
    return res if res.ndim else float(res)


# --------------------------------------------------------------------------
# alpha for the interval set


def alpha_interval_1d(p: IntervalSetParams, t):
    """E{(D - t)+} / E(D) for D = 24 * Beta(10, 240/mu - 10).

    Closed form through regularized incomplete beta functions:
    E{delta 1(delta > c)} = E(delta) Pr{Beta(a+1, b) > c}.
    """
    t = np.abs(np.asarray(t, dtype=float))
    c = np.clip(t / INTERVAL_SPAN, 0.0, 1.0)
    a, b = BETA_A, p.beta_b
    mean_d = INTERVAL_SPAN * a / (a + b)
    val = mean_d * special.betaincc(a + 1, b, c) - t * special.betaincc(a, b, c)
    out = np.clip(val / mean_d, 0.0, 1.0)
    return out if out.ndim else float(out)


def alpha_interval_1d_quadrature(p: IntervalSetParams, t, n_nodes: int = 256):
    """Gauss-Legendre evaluation of the interval-set overlap (reference route)."""
    t = float(abs(t))
    if t >= INTERVAL_SPAN:
        return 0.0
    lo = t / INTERVAL_SPAN
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    xs = lo + (1 - lo) * (x + 1) / 2
    dens = stats.beta.pdf(xs, BETA_A, p.beta_b)
    val = np.sum(w * (INTERVAL_SPAN * xs - t) * dens) * (1 - lo) / 2
    return float(val / p.mu)


def alpha(set_params, s_norm, t, theta=0.0):
    """Dispatch alpha(h) on the set type (interval sets ignore s and theta)."""
    if isinstance(set_params, CylinderSetParams):
        return alpha_spacetime(set_params, s_norm, t, theta)
    if isinstance(set_params, IntervalSetParams):
        return alpha_interval_1d(set_params, t)
    raise TypeError(f"unknown set parameters {type(set_params).__name__}")


# --------------------------------------------------------------------------
# Monte Carlo reference


def sample_cylinder_marks(p: CylinderSetParams, n, rng):
    """Draw (R, V, D) for ``n`` storms; V has shape (n, 2)."""
    R = rng.gamma(p.k_R, p.m_R / p.k_R, size=n)
    V = rng.multivariate_normal([p.m_V1, p.m_V2], p.omega, size=n)
    D = rng.gamma(p.k_D, p.m_D / p.k_D, size=n)
    return R, V, D


def alpha_mc_oracle(p: CylinderSetParams, s_norm, t, theta, n_draws: int = 100_000,
                    seed=None, overlap: str = "linear"):
    """Monte Carlo estimate of alpha(h) with its standard error.

    Uses the ratio estimator sum|B ∩ (h+B)| / sum|B| over sampled storms, so
    the estimate at h = 0 is exactly one.  ``overlap`` selects the
    linearized (``"linear"``, the model definition) or the exact
    (``"exact"``) disc-overlap area.
    """
    if n_draws < 10_000:
        raise ValueError("n_draws must be at least 1e4")
    rng = np.random.default_rng(seed)
    R, V, D = sample_cylinder_marks(p, n_draws, rng)
    d = effective_distance(s_norm, t, V, theta)
    area = disc_overlap_area(R, d) if overlap == "linear" else lens_area(R, d)
    num = area * np.maximum(D - abs(t), 0.0)
    den = np.pi * R**2 * D
    est = num.sum() / den.sum()
    resid = num - est * den
    se = np.sqrt(np.var(resid, ddof=1) / n_draws) / den.mean()
    return float(est), float(se)
