"""Censored nonparametric estimators of pairwise and trivariate extremal coefficients.

For a max-stable vector with unit Fréchet margins, Pr(all <= u) equals
exp(-theta/u), so ``theta_hat = -u log p_hat`` where ``p_hat`` is the
proportion of tuples with every member at or below ``u``.  Only the
censoring indicator of each observation is used.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import CoeffAtBound, InsufficientData
from .likelihood import SpaceTimePanel

Z_95 = 1.959963984540054
MIN_BATCH = 50


@dataclass(frozen=True)
class CoeffEstimate:
    value: float
    ci_lower: float
    ci_upper: float
    n_effective: int
    lag: object = 0
    ids: tuple = ()
    at_bound: bool = False
    raw: float = field(default=np.nan, compare=False)

    def contains(self, x) -> bool:
        return self.ci_lower <= x <= self.ci_upper


def frechet_threshold(q: float) -> float:
    """Unit-Fréchet quantile ``-1/log q``."""
    if not 0 < q < 1:
        raise ValueError("quantile must lie in (0, 1)")
    return -1.0 / np.log(q)


def _aligned(series, offsets, blocks):
    """Rows (t + o_1, ..., t + o_k) of the series that stay inside one block."""
    xs = [np.asarray(s, dtype=float) for s in series]
    T = xs[0].size
    if any(x.size != T for x in xs):
        raise ValueError("series must have equal length")
    offs = np.asarray(offsets, dtype=int)
    shift = offs - offs.min()
    span = int(shift.max())
    if span >= T:
        return np.zeros((len(xs), 0))
    t = np.arange(T - span)
    if blocks is not None:
        b = np.asarray(blocks)
        t = t[b[t] == b[t + span]]
    rows = np.stack([x[t + o] for x, o in zip(xs, shift)])
    return rows[:, np.all(np.isfinite(rows), axis=0)]


def _inflation(ind, batch):
    """Ratio of the batch-means variance of an indicator to its i.i.d. variance (>= 1)."""
    n = ind.size
    nb = n // batch
    p = ind.mean()
    if nb < 2 or p <= 0 or p >= 1:
        return 1.0
    means = ind[: nb * batch].reshape(nb, batch).mean(axis=1)
    lrv = batch * means.var(ddof=1)
    return max(1.0, float(lrv / (p * (1 - p))))


def _estimate(rows, u, dim, lag, ids, batch):
    if not u > 0:
        raise ValueError("threshold must be positive")
    n = rows.shape[1]
    if n == 0:
        raise InsufficientData("no complete tuples for this lag")
    ind = np.all(rows <= u, axis=0).astype(float)
    p = ind.mean()
    if p == 0:
        warnings.warn(f"no tuple below the threshold at lag {lag}", CoeffAtBound)
        lo = min(float(dim), max(1.0, -u * np.log(min(1.0, 3.0 / n))))
        return CoeffEstimate(float(dim), lo, float(dim), n, lag, ids, True, np.inf)
    if p == 1:
        warnings.warn(f"every tuple below the threshold at lag {lag}", CoeffAtBound)
        return CoeffEstimate(1.0, 1.0, 1.0, n, lag, ids, True, 0.0)
    raw = -u * np.log(p)
    infl = _inflation(ind, batch or max(MIN_BATCH, int(np.sqrt(n))))
    sd = u * np.sqrt(infl * (1 - p) / (p * n))
    lo, hi = raw - Z_95 * sd, raw + Z_95 * sd
    value = float(np.clip(raw, 1.0, dim))
    lo = float(np.clip(lo, 1.0, dim))
    hi = float(np.clip(hi, 1.0, dim))
    return CoeffEstimate(value, min(lo, value), max(hi, value), int(round(n / infl)),
                         lag, ids, False, float(raw))


def censored_theta2_hat(z1, z2, h: int, u: float, blocks=None, batch: int = None,
                        ids=()) -> CoeffEstimate:
    """Pairwise coefficient between ``z1`` at time t and ``z2`` at time t + h.

    Pairs never cross a block boundary when ``blocks`` is given.  The 95%
    interval is the delta-method interval for log p_hat with the binomial
    variance inflated by a batch-means factor; value and interval are
    clamped to [1, 2].
    """
    rows = _aligned([z1, z2], [0, h], blocks)
    return _estimate(rows, u, 2, h, tuple(ids), batch)


def censored_theta3_hat(series, lags, u: float, blocks=None, batch: int = None,
                        ids=()) -> CoeffEstimate:
    """Trivariate coefficient of ``series[j]`` observed at time t + lags[j]."""
    if len(series) != 3 or len(lags) != 3:
        raise ValueError("three series and three time offsets are required")
    rows = _aligned(series, lags, blocks)
    return _estimate(rows, u, 3, tuple(int(x) for x in lags), tuple(ids), batch)


@dataclass
class CoefficientGrid:
    """theta2 curves for every ordered station pair (row r, column c)."""

    station_ids: tuple
    lags: tuple
    cells: dict
    indep: dict

    def rows(self):
        for (r, c), ests in self.cells.items():
            for e in ests:
                yield {"row_station": self.station_ids[r], "col_station": self.station_ids[c],
                       "lag": e.lag, "theta2": e.value, "ci_lo": e.ci_lower,
                       "ci_hi": e.ci_upper}


def coefficient_panel(panel: SpaceTimePanel, lags=range(25), u: float = None,
                      quantile: float = 0.97) -> CoefficientGrid:
    """Grid of censored theta2 curves; cell (r, c) pairs Z^c_t with Z^r_{t+h}.

    ``indep[(r, c)]`` is the first lag whose interval contains 2, or None.
    """
    u = frechet_threshold(quantile) if u is None else u
    S = panel.n_stations
    lags = tuple(int(h) for h in lags)
    cells, indep = {}, {}
    ids = panel.station_ids
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CoeffAtBound)
        for r in range(S):
            for c in range(S):
                ests = []
                for h in lags:
                    if r == c and h == 0:
                        n = int(np.isfinite(panel.z[r]).sum())
                        ests.append(CoeffEstimate(1.0, 1.0, 1.0, n, 0, (ids[c], ids[r])))
                        continue
                    ests.append(censored_theta2_hat(panel.z[c], panel.z[r], h, u,
                                                    panel.block_labels, ids=(ids[c], ids[r])))
                cells[(r, c)] = ests
                indep[(r, c)] = next((e.lag for e in ests if e.contains(2.0)), None)
    return CoefficientGrid(ids, lags, cells, indep)
