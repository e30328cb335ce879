"""Correlation functions for the Gaussian storm profile."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class GneitingCorrParams:
    """Nonseparable space-time correlation.

    Scales are stored on the log scale: ``alpha_s`` is log(km), ``alpha_t``
    is log(hours).  ``beta_t`` defaults to 1.
    """

    alpha_s: float
    alpha_t: float
    beta_s: float
    beta_t: float = 1.0
    gamma: float = 0.5
    d: int = 2

    def __post_init__(self):
        if not 0 < self.beta_s < 2:
            raise DomainError(f"beta_s must lie in (0, 2), got {self.beta_s}")
        if not 0 < self.beta_t < 2:
            raise DomainError(f"beta_t must lie in (0, 2), got {self.beta_t}")
        if not 0 < self.gamma < 1:
            raise DomainError(f"gamma must lie in (0, 1), got {self.gamma}")


@dataclass(frozen=True)
class ExpCorrParams:
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise DomainError(f"range must be positive, got {self.lam}")


def gneiting_corr(p: GneitingCorrParams, s, t):
    """Gneiting-type correlation at spatial distance ``s`` (km), time lag ``t`` (hr)."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise DomainError("distances and time lags must be nonnegative")
    psi = (t / np.exp(p.alpha_t)) ** p.beta_t + 1.0
    spatial = (s / np.exp(p.alpha_s)) ** p.beta_s
    return psi ** (-p.d * p.gamma / 2) * np.exp(-spatial / psi ** (p.beta_s * p.gamma / 2))


def exp_corr(p: ExpCorrParams, h):
    """Exponential correlation ``exp(-h/lam)``."""
    h = np.asarray(h, dtype=float)
    return np.exp(-h / p.lam)


def effective_range(p: ExpCorrParams) -> float:
    """Distance at which the exponential correlation falls to exp(-3) ~ 0.05."""
    return 3.0 * p.lam


def correlation(p, s, t):
    """Dispatch on the parameter type.

    For ExpCorrParams the process lives on the time axis, so ``s`` must be
    zero and ``t`` is the lag.
    """
    if isinstance(p, GneitingCorrParams):
        return gneiting_corr(p, s, t)
    if isinstance(p, ExpCorrParams):
        return exp_corr(p, np.hypot(s, t))
    raise TypeError(f"unknown correlation parameters {type(p).__name__}")
