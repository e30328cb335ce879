"""Semiparametric marginal model: empirical body, generalized Pareto tail.

Each station is modelled by its empirical CDF below a high threshold ``u``
and by a GPD fitted to the excesses above it.  ``to_unit_frechet`` maps the
data to the unit Fréchet scale through ``z = -1/log F(x)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import DomainError, InsufficientData, NoConvergence

CDF_EPS = 1e-12
XI_BOUNDS = (-0.9, 2.0)
MIN_EXCESSES = 10


@dataclass(frozen=True)
class GpdParams:
    sigma: float
    xi: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError(f"GPD scale must be positive, got {self.sigma}")

    @property
    def upper_endpoint(self) -> float:
        """Upper end of the excess support (``inf`` when xi >= 0)."""
        if self.xi < 0:
            return self.sigma / -self.xi
        return np.inf


def gpd_cdf(p: GpdParams, y):
    """CDF of the generalized Pareto distribution at excess ``y``.

    Uses the exponential limit ``1 - exp(-y/sigma)`` when ``xi == 0``.
    Raises DomainError for negative excesses or excesses beyond the finite
    upper endpoint ``sigma/|xi|``.
    """
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise DomainError("GPD excesses must be nonnegative")
    if p.xi < 0 and np.any(y > p.upper_endpoint):
        raise DomainError(
            f"excess beyond the upper endpoint {p.upper_endpoint:g} of the GPD")
    return 1.0 - _gpd_sf(p.sigma, p.xi, y)


def _gpd_sf(sigma, xi, y):
    if xi == 0.0:
        return np.exp(-y / sigma)
    w = np.maximum(1.0 + xi * y / sigma, 0.0)
    with np.errstate(divide="ignore"):
        return np.where(w > 0, np.exp(-np.log(w) / xi), 0.0)


def gpd_loglik(p: GpdParams, excesses) -> float:
    y = np.asarray(excesses, dtype=float)
    return -float(_negloglik_and_grad(np.array([np.log(p.sigma), p.xi]), y)[0])


def _negloglik_and_grad(theta, y):
    """Negative GPD log-likelihood and its gradient in (log sigma, xi)."""
    log_sigma, xi = theta
    sigma = np.exp(log_sigma)
    n = y.size
    z = y / sigma
    w = 1.0 + xi * z
    if np.any(w <= 0):
        return np.inf, np.zeros(2)
    if abs(xi) < 1e-7:
        # series expansion around the exponential case
        s_log = np.sum(z - xi * z**2 / 2)
        ll = -n * log_sigma - s_log - xi * np.sum(z - z**2 / 2)
        d_ls = -n + (1 + xi) * np.sum(z / w)
        d_xi = np.sum(z**2 / 2 - z) + xi * np.sum(z**2 - 2 * z**3 / 3)
    else:
        lw = np.log1p(xi * z)
        ll = -n * log_sigma - (1 + 1 / xi) * np.sum(lw)
        d_ls = -n + (1 + xi) * np.sum(z / w)
        d_xi = np.sum(lw) / xi**2 - (1 + 1 / xi) * np.sum(z / w)
    return -ll, -np.array([d_ls, d_xi])


def gpd_score(p: GpdParams, excesses) -> np.ndarray:
    """Score vector in (log sigma, xi) at ``p``."""
    y = np.asarray(excesses, dtype=float)
    return -_negloglik_and_grad(np.array([np.log(p.sigma), p.xi]), y)[1]


def _pwm_init(y):
    # Hosking & Wallis (1987) probability-weighted moments
    ys = np.sort(y)
    n = ys.size
    pp = (np.arange(1, n + 1) - 0.35) / n
    a0 = ys.mean()
    a1 = np.mean((1 - pp) * ys)
    denom = a0 - 2 * a1
    if denom <= 0:
        return np.log(a0), 0.0
    k = a0 / denom - 2
    sigma = 2 * a0 * a1 / denom
    xi = float(np.clip(-k, XI_BOUNDS[0] + 0.05, XI_BOUNDS[1] - 0.05))
    if xi < 0:
        # keep the initializer inside the support
        sigma = max(sigma, -xi * ys[-1] * 1.01)
    return np.log(sigma), xi


def fit_gpd(excesses) -> GpdParams:
    """Maximum likelihood fit of the GPD to positive threshold excesses.

    The optimisation runs over ``(log sigma, xi)`` with ``xi`` restricted to
    ``[-0.9, 2]`` and starts from the probability-weighted-moment estimates.

    Raises
    ------
    InsufficientData
        Fewer than 10 excesses.
    NoConvergence
        Degenerate sample or optimizer failure; ``err.last`` holds the last
        iterate as a GpdParams (or None).
    """
    y = np.asarray(excesses, dtype=float)
    y = y[np.isfinite(y)]
    if y.size < MIN_EXCESSES:
        raise InsufficientData(
            f"need at least {MIN_EXCESSES} excesses, got {y.size}")
    if np.any(y <= 0):
        raise DomainError("excesses must be strictly positive")
    if np.ptp(y) <= 1e-12 * np.max(y):
        raise NoConvergence(
            "degenerate excesses (all equal): shape tends to the -1 boundary")

    # work with scaled data to keep the objective well conditioned
    scale = np.mean(y)
    ys = y / scale
    x0 = np.array(_pwm_init(ys))
    if not np.isfinite(_negloglik_and_grad(x0, ys)[0]):
        x0 = np.array([np.log(np.mean(ys)), 0.0])
    bounds = [(None, None), XI_BOUNDS]
    res = optimize.minimize(
        _negloglik_and_grad, x0, args=(ys,), jac=True, method="L-BFGS-B",
        bounds=bounds, options={"ftol": 1e-15, "gtol": 1e-11, "maxiter": 2000})
    theta = res.x
    theta = _newton_polish(theta, ys)
    last = GpdParams(float(np.exp(theta[0]) * scale), float(theta[1]))
    f, g = _negloglik_and_grad(theta, ys)
    interior = XI_BOUNDS[0] < theta[1] < XI_BOUNDS[1]
    if not np.isfinite(f) or (interior and np.linalg.norm(g) / ys.size > 1e-6):
        raise NoConvergence(f"GPD fit did not converge: {res.message}", last=last)
    return last


def _newton_polish(theta, y, steps=8):
    """A few safeguarded Newton steps on the analytic score."""
    for _ in range(steps):
        f, g = _negloglik_and_grad(theta, y)
        if np.linalg.norm(g) / y.size < 1e-12:
            break
        h = np.empty((2, 2))
        eps = 1e-6
        for j in range(2):
            d = np.zeros(2)
            d[j] = eps
            h[:, j] = (_negloglik_and_grad(theta + d, y)[1]
                       - _negloglik_and_grad(theta - d, y)[1]) / (2 * eps)
        h = (h + h.T) / 2
        try:
            if np.any(np.linalg.eigvalsh(h) <= 0):
                break
            step = np.linalg.solve(h, g)
        except np.linalg.LinAlgError:
            break
        new = theta - step
        if not XI_BOUNDS[0] <= new[1] <= XI_BOUNDS[1]:
            break
        if _negloglik_and_grad(new, y)[0] > f + 1e-12 * abs(f):
            break
        theta = new
    return theta


def gpd_standard_errors(p: GpdParams, excesses) -> np.ndarray:
    """Standard errors of (sigma, xi) from the inverse observed information."""
    y = np.asarray(excesses, dtype=float)
    theta = np.array([np.log(p.sigma), p.xi])
    h = np.empty((2, 2))
    eps = 1e-5
    for j in range(2):
        d = np.zeros(2)
        d[j] = eps
        h[:, j] = (_negloglik_and_grad(theta + d, y)[1]
                   - _negloglik_and_grad(theta - d, y)[1]) / (2 * eps)
    cov = np.linalg.inv((h + h.T) / 2)
    # delta method back to sigma
    jac = np.diag([p.sigma, 1.0])
    cov = jac @ cov @ jac.T
    return np.sqrt(np.diag(cov))


@dataclass(frozen=True)
class MarginalTransform:
    """Fitted per-station marginal model.

    ``zeta_u`` is defined as ``1 - Fhat(u)`` so that the composite CDF is
    continuous at the threshold; it differs from the raw exceedance
    proportion by less than one count.
    """

    u: float
    zeta_u: float
    gpd: GpdParams
    sorted_sample: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return int(self.sorted_sample.size)

    def to_dict(self) -> dict:
        return {"u": float(self.u), "zeta_u": float(self.zeta_u),
                "sigma": float(self.gpd.sigma), "xi": float(self.gpd.xi),
                "n": self.n}


def fit_marginal(sample, quantile: float = 0.97, name=None) -> MarginalTransform:
    """Fit the empirical-plus-GPD marginal model to one station's series.

    Missing values (NaN) are ignored.  The threshold is the empirical
    ``quantile`` of the sample; observations equal to it are not exceedances.
    """
    x = np.asarray(sample, dtype=float)
    x = np.sort(x[np.isfinite(x)])
    label = f" at station {name!r}" if name is not None else ""
    if x.size == 0:
        raise InsufficientData(f"no observations{label}")
    u = float(np.quantile(x, quantile))
    exc = x[x > u] - u
    if exc.size < MIN_EXCESSES:
        raise InsufficientData(
            f"only {exc.size} exceedances of the {quantile} quantile{label}")
    try:
        gpd = fit_gpd(exc)
    except NoConvergence as err:
        raise NoConvergence(f"{err}{label}", last=err.last) from err
    n = x.size
    f_u = np.searchsorted(x, u, side="right") / (n + 1)
    return MarginalTransform(u=u, zeta_u=float(1.0 - f_u), gpd=gpd,
                             sorted_sample=x)


def semiparametric_cdf(m: MarginalTransform, x):
    """Composite CDF: empirical (rank/(n+1)) up to ``u``, GPD tail above.

    Output is clamped to ``[1e-12, 1 - 1e-12]``; NaN inputs give NaN.
    """
    x = np.asarray(x, dtype=float)
    out = np.full(x.shape, np.nan)
    ok = np.isfinite(x)
    xv = x[ok]
    body = np.searchsorted(m.sorted_sample, xv, side="right") / (m.n + 1)
    y = np.maximum(xv - m.u, 0.0)
    tail = 1.0 - m.zeta_u * _gpd_sf(m.gpd.sigma, m.gpd.xi, y)
    out[ok] = np.where(xv <= m.u, body, tail)
    out[ok] = np.clip(out[ok], CDF_EPS, 1.0 - CDF_EPS)
    return out


def to_unit_frechet(m: MarginalTransform, series):
    """Transform ``series`` to the unit Fréchet scale, ``-1/log F(x)``."""
    return -1.0 / np.log(semiparametric_cdf(m, series))


def from_unit_frechet(m: MarginalTransform, z):
    """Inverse of :func:`to_unit_frechet`.

    Exact above the threshold; below it the empirical quantile is returned.
    """
    z = np.asarray(z, dtype=float)
    f = np.exp(-1.0 / z)
    out = np.full(z.shape, np.nan)
    f_u = 1.0 - m.zeta_u
    ok = np.isfinite(z)
    fv = f[ok]
    ratio = (1.0 - fv) / m.zeta_u
    sigma, xi = m.gpd.sigma, m.gpd.xi
    with np.errstate(divide="ignore", invalid="ignore"):
        if xi == 0.0:
            tail = m.u - sigma * np.log(ratio)
        else:
            tail = m.u + sigma / xi * (ratio ** (-xi) - 1.0)
    idx = np.clip(np.ceil(fv * (m.n + 1)).astype(int) - 1, 0, m.n - 1)
    body = m.sorted_sample[idx]
    out[ok] = np.where(fv > f_u, tail, body)
    return out
