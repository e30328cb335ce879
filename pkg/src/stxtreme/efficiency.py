"""Efficiency of pairwise likelihood for AR(1) and MA(1) series.

The pairwise likelihood uses the bivariate normal densities of
``(Z_t, Z_{t+h})`` for ``h`` in the lag set, with all three parameters
``(lambda, sigma, mu)`` estimated.  Its asymptotic variance is the sandwich
``J^-1 K J^-1 / T`` where ``J`` is the sum over lags of the exact Fisher
information of the pair densities and ``K`` the long-run variance of the
per-time score, estimated on simulated series either from the truncated
autocovariance sum (default) or by non-overlapping batch means.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._seeds import seed_sequence
from .likelihood import LagSet, make_lag_set
from .simulate import simulate_ar1, simulate_ma1

MODELS = ("ar1", "ma1")
BATCH_FACTOR = 20
MIN_BATCHES = 50
ACOV_EXTRA_LAGS = 50
DEFAULT_SERIES_LENGTH = 200_000


def _check(model, lam):
    if model not in MODELS:
        raise ValueError(f"model must be one of {MODELS}, got {model!r}")
    if not abs(lam) < 1:
        raise ValueError("|lambda| must be below 1")


def autocov(model, lam, sigma, h):
    """Lag-``h`` autocovariance and its derivatives in (lambda, sigma)."""
    h = np.asarray(h)
    if model == "ar1":
        g0 = sigma**2 / (1 - lam**2)
        g = g0 * lam**h
        dg0_dl = 2 * lam * sigma**2 / (1 - lam**2) ** 2
        dlh = np.where(h > 0, h * lam ** np.maximum(h - 1, 0), 0.0)
        dg_dl = dg0_dl * lam**h + g0 * dlh
        dg_ds = 2 * g / sigma
    else:
        g0 = sigma**2 * (1 + lam**2)
        g = np.where(h == 0, g0, np.where(h == 1, sigma**2 * lam, 0.0))
        dg_dl = np.where(h == 0, 2 * sigma**2 * lam, np.where(h == 1, sigma**2, 0.0))
        dg_ds = 2 * g / sigma
    return g, dg_dl, dg_ds


def _pair_pieces(model, lam, sigma, h):
    """Variance, covariance and their gradients in (lambda, sigma, mu)."""
    g0, d0l, d0s = autocov(model, lam, sigma, 0)
    gh, dhl, dhs = autocov(model, lam, sigma, h)
    dv = np.array([d0l, d0s, 0.0])
    dc = np.array([dhl, dhs, 0.0])
    return g0, gh, dv, dc


def gaussian_pair_loglik(model, params, z1, z2, h):
    """Bivariate normal log-density of ``(z1, z2)`` at lag ``h`` and its gradient.

    ``params`` is ``(lambda, sigma, mu)``.  Returns ``(loglik, grad)`` with
    the gradient in (lambda, sigma, mu) stacked along the last axis; the
    lambda-derivative is ``grad[..., 0]``.
    """
    lam, sigma, mu = params
    _check(model, lam)
    v, c, dv, dc = _pair_pieces(model, lam, sigma, h)
    a, b = np.broadcast_arrays(np.asarray(z1, dtype=float) - mu,
                               np.asarray(z2, dtype=float) - mu)
    det = v * v - c * c
    ss, cross = a * a + b * b, a * b
    q = v * ss - 2 * c * cross
    ll = -np.log(2 * np.pi) - 0.5 * np.log(det) - 0.5 * q / det
    grads = []
    for i in range(2):
        ddet = 2 * v * dv[i] - 2 * c * dc[i]
        dq = dv[i] * ss - 2 * dc[i] * cross
        grads.append(-0.5 * ddet / det - 0.5 * (dq / det - q * ddet / det**2))
    grads.append((v - c) * (a + b) / det)
    return ll, np.stack(grads, axis=-1)


def pair_fisher_info(model, lam, sigma, h):
    """Exact 3x3 Fisher information of one lag-``h`` pair density."""
    v, c, dv, dc = _pair_pieces(model, lam, sigma, h)
    sig = np.array([[v, c], [c, v]])
    inv = np.linalg.inv(sig)
    dS = [np.array([[dv[i], dc[i]], [dc[i], dv[i]]]) for i in range(3)]
    dm = [np.zeros(2), np.zeros(2), np.ones(2)]
    info = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            info[i, j] = (dm[i] @ inv @ dm[j]
                          + 0.5 * np.trace(inv @ dS[i] @ inv @ dS[j]))
    return info


def _positive_lags(K):
    lags = [h for h in (K.lags if isinstance(K, LagSet) else K) if h > 0]
    if not lags:
        raise ValueError("the lag set needs at least one positive lag")
    return lags


def per_time_scores(model, params, z, K):
    """Per-time pairwise scores U_t = sum_h grad log f(z_t, z_{t+h}).

    Only pairs with ``t + h`` inside the series contribute.
    """
    lags = _positive_lags(K)
    T = z.size
    U = np.zeros((T, 3))
    for h in lags:
        if h >= T:
            continue
        _, g = gaussian_pair_loglik(model, params, z[: T - h], z[h:], h)
        U[: T - h] += g
    return U


def _simulate(model, lam, sigma, mu, n, seed):
    sim = simulate_ar1 if model == "ar1" else simulate_ma1
    return sim(lam, sigma, mu, n, seed)


def batch_means_lrv(U, batch):
    """Long-run variance matrix of the rows of ``U`` by non-overlapping batch means."""
    nb = U.shape[0] // batch
    if nb < 2:
        raise ValueError("series too short for two batches")
    means = U[: nb * batch].reshape(nb, batch, -1).sum(axis=1)
    c = means - means.mean(axis=0)
    return c.T @ c / (nb - 1) / batch


def acov_lrv(U, max_lag):
    """Long-run variance from autocovariances of ``U`` truncated at ``max_lag``."""
    n = U.shape[0]
    c = U - U.mean(axis=0)
    size = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(c, size, axis=0)
    out = np.zeros((U.shape[1], U.shape[1]))
    for i in range(U.shape[1]):
        for j in range(U.shape[1]):
            # cc[k] = sum_t c_i(t) c_j(t + k)
            cc = np.fft.irfft(np.conj(f[:, i]) * f[:, j], size)
            out[i, j] = cc[0] + cc[1:max_lag + 1].sum() + cc[size - max_lag:].sum()
    out /= n
    return (out + out.T) / 2


def mle_avar(model, lam, T) -> float:
    """Asymptotic variance of the maximum likelihood estimator of lambda."""
    _check(model, lam)
    return (1 - lam**2) / T


@dataclass(frozen=True)
class AreResult:
    model: str
    lags: tuple
    are: float
    mc_se: float
    avar: float
    mle_avar: float
    J: np.ndarray
    K: np.ndarray

    def row(self, family=None, k=None) -> dict:
        return {"model": self.model, "family": family, "K": k,
                "are": self.are, "mc_se": self.mc_se}


def sandwich_avar(model, lam, sigma, K, T, n_mc: int = 20, mu: float = 0.0, seed=None,
                  series_length: int = DEFAULT_SERIES_LENGTH, lrv: str = "acov"):
    """Sandwich variance of the pairwise estimator of lambda.

    Simulates ``n_mc`` independent series of ``series_length`` points (at
    least 50 batches of length ``20 max(K)``), estimates the long-run score
    variance per series and averages.  ``lrv`` selects the autocovariance
    sum truncated at ``max(K) + 50`` (``"acov"``) or batch means with batch
    length ``20 max(K)`` (``"batch"``); the latter is biased downwards by
    O(1/batch).  Returns an AreResult whose ``avar`` is scaled to sample
    size ``T``; ``mc_se`` is the MC standard error of the ARE.
    """
    _check(model, lam)
    if lrv not in ("acov", "batch"):
        raise ValueError(f"unknown long-run variance method {lrv!r}")
    lags = _positive_lags(K)
    batch = BATCH_FACTOR * max(lags)
    n = max(series_length or 0, MIN_BATCHES * batch, T)
    J = sum(pair_fisher_info(model, lam, sigma, h) for h in lags)
    Jinv = np.linalg.inv(J)
    seeds = seed_sequence(seed).spawn(n_mc)
    per_series = []
    Ks = []
    for s in seeds:
        z = _simulate(model, lam, sigma, mu, n, s)
        U = per_time_scores(model, (lam, sigma, mu), z, lags)
        Kmat = (acov_lrv(U, max(lags) + ACOV_EXTRA_LAGS) if lrv == "acov"
                else batch_means_lrv(U, batch))
        Ks.append(Kmat)
        per_series.append((Jinv @ Kmat @ Jinv)[0, 0])
    per_series = np.array(per_series)
    v1 = per_series.mean()
    se_v1 = per_series.std(ddof=1) / np.sqrt(n_mc) if n_mc > 1 else np.nan
    avar = v1 / T
    mle = mle_avar(model, lam, T)
    are = mle / avar
    return AreResult(model=model, lags=tuple(lags), are=float(are),
                     mc_se=float(are * se_v1 / v1), avar=float(avar),
                     mle_avar=float(mle), J=J, K=np.mean(Ks, axis=0))


def family_lags(kind: str, k: int) -> tuple:
    """Positive lags of the ``k``-th member of a lag-set family."""
    return make_lag_set(kind, k).positive.lags


def are_curve(model, kind, K_max, lam, sigma, T, n_mc: int = 20, seed=None,
              **kwargs) -> list:
    """ARE for the lag sets of ``kind`` with K = 1..K_max."""
    seeds = seed_sequence(seed).spawn(K_max)
    return [sandwich_avar(model, lam, sigma, family_lags(kind, k), T, n_mc, seed=s, **kwargs)
            for k, s in zip(range(1, K_max + 1), seeds)]
