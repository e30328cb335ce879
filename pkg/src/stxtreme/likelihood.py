"""Censored pairwise log-likelihood over a space-time panel.

A pair joins the station ``s1`` at time ``t`` with the station ``s2`` at time
``t + h`` for ``h`` in the lag set.  Both orientations of a station pair are
used for ``h > 0``; at ``h = 0`` only ``s1 < s2`` enters.  Pairs never span
two blocks and pairs with a missing member are dropped.

Evaluation is split in two steps.  :func:`prepare_pairs` scans the panel once
for a given threshold and lag set, keeping the rows where at least one member
exceeds the threshold and only a count of the fully censored rows.  The
parameter-dependent part then touches ``rho`` and ``alpha`` once per
(station pair, lag) group.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, EvaluationError
from .model import SchlatherModelParams, censored_pair_logdens

CHUNK_ROWS = 65536


@dataclass(frozen=True)
class LagSet:
    lags: tuple
    kind: str = "explicit"

    def __post_init__(self):
        lags = tuple(sorted({int(h) for h in self.lags}))
        if not lags:
            raise ValueError("lag set is empty")
        if lags[0] < 0:
            raise ValueError("lags must be nonnegative")
        object.__setattr__(self, "lags", lags)

    def __iter__(self):
        return iter(self.lags)

    def __len__(self):
        return len(self.lags)

    @property
    def positive(self) -> "LagSet":
        return LagSet(tuple(h for h in self.lags if h > 0), self.kind)

    def __str__(self):
        return "{" + ",".join(map(str, self.lags)) + "}"


def make_lag_set(kind: str, K: int, a: float = 2.0) -> LagSet:
    """Lag set containing 0 and ``K`` positive lags of the requested family.

    ``all`` gives 1..K, ``powers`` gives floor(a^(k-1)) for k = 1..K
    (deduplicated), ``fibonacci`` gives 1, 2, 3, 5, 8, ...
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    if kind == "all":
        lags = range(K + 1)
    elif kind == "powers":
        if not a > 1:
            raise ValueError("the base of the powers family must exceed 1")
        lags = [0] + [math.floor(a ** (k - 1)) for k in range(1, K + 1)]
    elif kind == "fibonacci":
        seq = [1, 2]
        while len(seq) < K:
            seq.append(seq[-1] + seq[-2])
        lags = [0] + seq[:K]
    else:
        raise ValueError(f"unknown lag-set kind {kind!r}")
    return LagSet(tuple(lags), kind)


@dataclass(frozen=True)
class SpaceTimePanel:
    """Unit-Fréchet observations ``z`` (stations x times), NaN for missing.

    ``coords`` are projected positions in km (zeros for a single series),
    ``block_labels`` give the block (e.g. year) of each time index.
    """

    z: np.ndarray
    coords: np.ndarray = None
    block_labels: np.ndarray = None
    station_ids: tuple = None
    times: tuple = field(default=None, compare=False)

    def __post_init__(self):
        z = np.atleast_2d(np.asarray(self.z, dtype=float))
        S, T = z.shape
        present = z[np.isfinite(z)]
        if np.any(present <= 0):
            raise DomainError("unit-Fréchet values must be positive")
        coords = (np.zeros((S, 2)) if self.coords is None
                  else np.asarray(self.coords, dtype=float).reshape(S, 2))
        blocks = (np.zeros(T, dtype=int) if self.block_labels is None
                  else np.asarray(self.block_labels))
        if blocks.shape != (T,):
            raise ValueError("one block label per time index is required")
        change = np.flatnonzero(blocks[1:] != blocks[:-1]) + 1
        starts = blocks[np.r_[0, change]]
        if len(set(starts.tolist())) != starts.size:
            raise ValueError("block labels must be contiguous in time")
        ids = (tuple(f"s{i}" for i in range(S)) if self.station_ids is None
               else tuple(str(s) for s in self.station_ids))
        if len(ids) != S:
            raise ValueError("one id per station is required")
        z.setflags(write=False)
        coords.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "block_labels", blocks)
        object.__setattr__(self, "station_ids", ids)

    @property
    def n_stations(self) -> int:
        return self.z.shape[0]

    @property
    def n_times(self) -> int:
        return self.z.shape[1]

    @property
    def blocks(self) -> list:
        """Distinct block labels in time order."""
        labels = self.block_labels
        change = np.flatnonzero(labels[1:] != labels[:-1]) + 1
        return labels[np.r_[0, change]].tolist()

    def drop_block(self, label) -> "SpaceTimePanel":
        keep = self.block_labels != label
        times = None if self.times is None else tuple(np.asarray(self.times)[keep])
        return replace(self, z=self.z[:, keep], block_labels=self.block_labels[keep],
                       times=times)

    def block_sizes(self) -> dict:
        labels, counts = np.unique(self.block_labels, return_counts=True)
        return dict(zip(labels.tolist(), counts.tolist()))


def _station_pairs(S: int, h: int):
    for s1 in range(S):
        for s2 in range(S):
            if h == 0 and s1 >= s2:
                continue
            yield s1, s2


def _valid_starts(panel: SpaceTimePanel, h: int) -> np.ndarray:
    """Time indices t with t + h in the panel and in the same block."""
    T = panel.n_times
    if h >= T:
        return np.zeros(0, dtype=int)
    b = panel.block_labels
    return np.flatnonzero(b[: T - h] == b[h:])


def pair_count(panel: SpaceTimePanel, K: LagSet) -> int:
    """Exact number of pairs entering the pairwise likelihood."""
    ok = np.isfinite(panel.z)
    total = 0
    for h in K:
        t = _valid_starts(panel, h)
        a = ok[:, t].astype(np.int64)
        b = ok[:, t + h].astype(np.int64)
        both = a @ b.T
        if h == 0:
            total += int(np.triu(both, 1).sum())
        else:
            total += int(both.sum())
    return total


@dataclass(frozen=True)
class PairData:
    """Threshold-specific summary of a panel for a given lag set.

    Group ``g`` is one (s1, s2, h) combination with ``n_censored[g]`` fully
    censored rows; the remaining rows are stored in ``z1``, ``z2`` with
    their group index and start time.
    """

    u: float
    lags: LagSet
    s1: np.ndarray
    s2: np.ndarray
    h: np.ndarray
    s_norm: np.ndarray
    theta: np.ndarray
    n_censored: np.ndarray
    group: np.ndarray
    t: np.ndarray
    z1: np.ndarray
    z2: np.ndarray

    @property
    def n_pairs(self) -> int:
        return int(self.n_censored.sum() + self.z1.size)

    @property
    def n_groups(self) -> int:
        return self.s1.size


def prepare_pairs(panel: SpaceTimePanel, u: float, K: LagSet) -> PairData:
    if not u > 0:
        raise DomainError("threshold must be positive")
    z = panel.z
    ok = np.isfinite(z)
    S = panel.n_stations
    g_s1, g_s2, g_h, g_cens = [], [], [], []
    rows_g, rows_t, rows_1, rows_2 = [], [], [], []
    for h in K:
        t = _valid_starts(panel, h)
        for s1, s2 in _station_pairs(S, h):
            a = z[s1, t]
            b = z[s2, t + h]
            keep = ok[s1, t] & ok[s2, t + h]
            exc = keep & ((a > u) | (b > u))
            gi = len(g_s1)
            g_s1.append(s1)
            g_s2.append(s2)
            g_h.append(h)
            g_cens.append(int(keep.sum() - exc.sum()))
            rows_g.append(np.full(int(exc.sum()), gi, dtype=np.int64))
            rows_t.append(t[exc])
            rows_1.append(a[exc])
            rows_2.append(b[exc])
    s1 = np.array(g_s1, dtype=np.int64)
    s2 = np.array(g_s2, dtype=np.int64)
    d = panel.coords[s2] - panel.coords[s1]
    cat = (lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt))
    return PairData(
        u=float(u), lags=K, s1=s1, s2=s2, h=np.array(g_h, dtype=np.int64),
        s_norm=np.hypot(d[:, 0], d[:, 1]) if s1.size else np.zeros(0),
        theta=np.arctan2(d[:, 1], d[:, 0]) if s1.size else np.zeros(0),
        n_censored=np.array(g_cens, dtype=np.int64),
        group=cat(rows_g, np.int64), t=cat(rows_t, np.int64),
        z1=cat(rows_1, float), z2=cat(rows_2, float))


def group_rho_alpha(data: PairData, p: SchlatherModelParams):
    """Correlation and overlap coefficient for every (s1, s2, h) group."""
    n = data.n_groups
    rho = np.empty(n)
    alph = np.empty(n)
    cache = {}
    for g in range(n):
        key = (round(float(data.s_norm[g]), 12), round(float(data.theta[g]), 12),
               int(data.h[g]))
        if key not in cache:
            cache[key] = (float(p.rho(data.s_norm[g], data.h[g])),
                          float(p.alpha(data.s_norm[g], data.h[g], data.theta[g])))
        rho[g], alph[g] = cache[key]
    return rho, alph


def _chunk_terms(data, rho, alph, lo, hi):
    g = data.group[lo:hi]
    return censored_pair_logdens(data.z1[lo:hi], data.z2[lo:hi], data.u,
                                 rho[g], alph[g])


def pairwise_loglik_data(data: PairData, p: SchlatherModelParams,
                         workers: int = 1) -> float:
    """Pairwise log-likelihood from prepared pair data.

    Row contributions are computed in fixed chunks and summed with
    ``math.fsum``, so the value is independent of ``workers``.
    """
    rho, alph = group_rho_alpha(data, p)
    u = data.u
    # fully censored rows share one value per group
    cens = censored_pair_logdens(u, u, u, rho, alph) if data.n_groups else np.zeros(0)
    bad = np.flatnonzero(~np.isfinite(cens) & (data.n_censored > 0))
    if bad.size:
        g = int(bad[0])
        raise EvaluationError("non-finite censored contribution",
                              s1=int(data.s1[g]), s2=int(data.s2[g]), t=None,
                              h=int(data.h[g]), params=p)
    parts = [math.fsum(cens * data.n_censored)]
    n = data.z1.size
    bounds = [(lo, min(lo + CHUNK_ROWS, n)) for lo in range(0, n, CHUNK_ROWS)]

    def run(b):
        return _chunk_terms(data, rho, alph, *b)

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            chunks = list(ex.map(run, bounds))
    else:
        chunks = [run(b) for b in bounds]
    for (lo, _), terms in zip(bounds, chunks):
        bad = np.flatnonzero(~np.isfinite(terms))
        if bad.size:
            i = lo + int(bad[0])
            g = int(data.group[i])
            raise EvaluationError(
                "non-finite pair contribution", s1=int(data.s1[g]),
                s2=int(data.s2[g]), t=int(data.t[i]), h=int(data.h[g]),
                z1=float(data.z1[i]), z2=float(data.z2[i]), params=p)
        parts.append(math.fsum(terms))
    return math.fsum(parts)


def pairwise_loglik(panel: SpaceTimePanel, p: SchlatherModelParams, u: float,
                    K: LagSet, workers: int = 1) -> float:
    """Censored pairwise log-likelihood of ``panel`` at parameters ``p``."""
    return pairwise_loglik_data(prepare_pairs(panel, u, K), p, workers)


# --------------------------------------------------------------------------
# parameterization and finite-difference gradients


@dataclass(frozen=True)
class ParamSpec:
    """A free model parameter ``name`` (e.g. ``"corr.lam"``, ``"set.mu"``).

    ``transform`` maps the box ``[lower, upper]`` to the working scale used
    by the optimizer: ``identity``, ``log`` (positive parameters) or
    ``logit`` (open interval ``(lower, upper)``).
    """

    name: str
    lower: float
    upper: float
    transform: str = "identity"

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"empty bounds for {self.name}")
        if self.transform not in ("identity", "log", "logit"):
            raise ValueError(f"unknown transform {self.transform!r}")
        if self.transform == "log" and self.lower < 0:
            raise ValueError(f"log transform needs a nonnegative lower bound ({self.name})")

    def to_working(self, x):
        if self.transform == "log":
            return np.log(x)
        if self.transform == "logit":
            q = (x - self.lower) / (self.upper - self.lower)
            return np.log(q) - np.log1p(-q)
        return np.asarray(x, dtype=float) * 1.0

    def from_working(self, w):
        if self.transform == "log":
            return np.exp(w)
        if self.transform == "logit":
            return self.lower + (self.upper - self.lower) / (1.0 + np.exp(-w))
        return np.asarray(w, dtype=float) * 1.0

    def working_bounds(self):
        if self.transform == "log":
            lo = -np.inf if self.lower == 0 else np.log(self.lower)
            return lo, np.log(self.upper)
        if self.transform == "logit":
            return -np.inf, np.inf
        return self.lower, self.upper


def get_param(p: SchlatherModelParams, name: str) -> float:
    part, attr = name.split(".", 1)
    return float(getattr(getattr(p, part), attr))


def set_params(p: SchlatherModelParams, values: dict) -> SchlatherModelParams:
    """Copy of ``p`` with dotted-name overrides applied."""
    corr, rset = {}, {}
    for name, v in values.items():
        part, attr = name.split(".", 1)
        {"corr": corr, "set": rset}[part][attr] = float(v)
    return SchlatherModelParams(corr=replace(p.corr, **corr) if corr else p.corr,
                                set=replace(p.set, **rset) if rset else p.set)


_DEFAULT_SPECS = {
    "lam": (0.0, np.inf, "log"),
    "alpha_s": (-np.inf, np.inf, "identity"),
    "alpha_t": (-np.inf, np.inf, "identity"),
    "beta_s": (0.0, 2.0, "logit"),
    "beta_t": (0.0, 2.0, "logit"),
    "gamma": (0.0, 1.0, "logit"),
    "mu": (0.0, 24.0, "logit"),
    "m_R": (0.0, np.inf, "log"),
    "k_R": (0.0, np.inf, "log"),
    "m_D": (0.0, np.inf, "log"),
    "k_D": (0.0, np.inf, "log"),
    "m_V1": (-np.inf, np.inf, "identity"),
    "m_V2": (-np.inf, np.inf, "identity"),
    "var_V1": (0.0, np.inf, "log"),
    "var_V2": (0.0, np.inf, "log"),
    "rho_V": (-1.0, 1.0, "logit"),
}


def default_specs(p: SchlatherModelParams) -> list:
    """Unbounded-working-scale specs for every free parameter of ``p``."""
    out = []
    for part in ("corr", "set"):
        obj = getattr(p, part)
        for attr in obj.__dataclass_fields__:
            if attr == "d":
                continue
            lo, hi, tr = _DEFAULT_SPECS[attr]
            out.append(ParamSpec(f"{part}.{attr}", lo, hi, tr))
    return out


def fd_gradient(f: Callable, x, step: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient with relative step ``step``."""
    x = np.asarray(x, dtype=float)
    if step == 0:
        raise ValueError("step must be nonzero")
    g = np.empty(x.size)
    for i in range(x.size):
        h = step * max(1.0, abs(x[i]))
        e = np.zeros(x.size)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def gradient_fd(panel: SpaceTimePanel, p: SchlatherModelParams, u: float, K: LagSet,
                step: float = 1e-5, specs: Sequence[ParamSpec] = None,
                workers: int = 1) -> np.ndarray:
    """FD gradient of the pairwise log-likelihood on the working scale."""
    specs = list(specs) if specs is not None else default_specs(p)
    data = prepare_pairs(panel, u, K)
    w0 = np.array([s.to_working(get_param(p, s.name)) for s in specs])

    def f(w):
        vals = {s.name: s.from_working(wi) for s, wi in zip(specs, w)}
        return pairwise_loglik_data(data, set_params(p, vals), workers)

    return fd_gradient(f, w0, step)
