"""Box-constrained maximum pairwise likelihood, staged fits and block jackknife."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .errors import InsufficientData, JackknifeIncomplete, NoConvergence, StxtremeError
from .likelihood import (LagSet, ParamSpec, PairData, SpaceTimePanel, get_param,
                         pairwise_loglik_data, prepare_pairs, set_params)
from .model import SchlatherModelParams

BOUND_TOL = 1e-6


@dataclass(frozen=True)
class FitConfig:
    """Free parameters, their boxes, the stage schedule and optimizer settings.

    ``stages`` is a sequence of name groups fitted in turn with the others
    held fixed, followed by a joint fit over all of ``specs``.  An empty
    schedule means a single joint fit.
    """

    specs: tuple
    stages: tuple = ()
    gtol: float = 1e-5
    xtol: float = 1e-8
    maxiter: int = 500
    fd_step: float = 1e-5
    seed: int = None
    workers: int = 1

    def __post_init__(self):
        specs = tuple(self.specs)
        if not specs:
            raise ValueError("no free parameters")
        names = [s.name for s in specs]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names")
        stages = tuple(tuple(g) for g in self.stages)
        for g in stages:
            unknown = set(g) - set(names)
            if unknown:
                raise ValueError(f"stage refers to unknown parameters {sorted(unknown)}")
        object.__setattr__(self, "specs", specs)
        object.__setattr__(self, "stages", stages)

    @property
    def names(self) -> list:
        return [s.name for s in self.specs]

    def spec(self, name) -> ParamSpec:
        return next(s for s in self.specs if s.name == name)


@dataclass
class FitResult:
    estimates: dict
    loglik: float
    converged: bool
    at_bound: list
    iterations: int
    n_evals: int
    message: str = ""
    trace: list = field(default_factory=list)
    params: SchlatherModelParams = field(default=None, repr=False)

    @property
    def success(self) -> bool:
        """Converged with no parameter on the boundary of its box."""
        return self.converged and not self.at_bound

    def to_dict(self) -> dict:
        return {"estimates": {k: float(v) for k, v in self.estimates.items()},
                "loglik": float(self.loglik), "converged": bool(self.converged),
                "at_bound": list(self.at_bound), "success": bool(self.success),
                "iterations": int(self.iterations), "n_evals": int(self.n_evals),
                "message": self.message, "trace": self.trace}


def _bounded_fd_gradient(f, w, lo, hi, step):
    """Central differences, one-sided where a step would leave the box."""
    g = np.empty(w.size)
    f0 = None
    for i in range(w.size):
        h = step * max(1.0, abs(w[i]))
        e = np.zeros(w.size)
        e[i] = h
        up_ok = w[i] + h <= hi[i]
        dn_ok = w[i] - h >= lo[i]
        if up_ok and dn_ok:
            g[i] = (f(w + e) - f(w - e)) / (2 * h)
        else:
            if f0 is None:
                f0 = f(w)
            g[i] = (f(w + e) - f0) / h if up_ok else (f0 - f(w - e)) / h
    return g


def _at_bound(spec: ParamSpec, value) -> bool:
    span = spec.upper - spec.lower
    tol = BOUND_TOL * (span if np.isfinite(span) else max(1.0, abs(value)))
    return bool(value - spec.lower <= tol or spec.upper - value <= tol)


def _check_init(specs, p):
    for s in specs:
        v = get_param(p, s.name)
        if not s.lower <= v <= s.upper:
            raise ValueError(f"initial {s.name}={v} outside [{s.lower}, {s.upper}]")
        if s.transform != "identity" and not s.lower < v < s.upper:
            raise ValueError(f"initial {s.name}={v} must be interior for a {s.transform} transform")


def _maximize_data(data: PairData, init: SchlatherModelParams, specs: Sequence[ParamSpec],
                   cfg: FitConfig, label: str = "joint") -> FitResult:
    specs = list(specs)
    _check_init(specs, init)
    # gradients of loglik / sqrt(n) are O(1) at any panel size, so gtol is a
    # fixed fraction of a standard error
    n = np.sqrt(max(data.n_pairs, 1))
    w0 = np.array([float(s.to_working(get_param(init, s.name))) for s in specs])
    wb = [s.working_bounds() for s in specs]
    lo = np.array([b[0] for b in wb])
    hi = np.array([b[1] for b in wb])
    evals = [0]
    best = {"f": np.inf, "w": w0}

    def params_at(w):
        return set_params(init, {s.name: float(s.from_working(wi)) for s, wi in zip(specs, w)})

    def f(w):
        evals[0] += 1
        val = -pairwise_loglik_data(data, params_at(w), cfg.workers) / n
        if val < best["f"]:
            best["f"], best["w"] = val, np.array(w, dtype=float)
        return val

    def fg(w):
        return f(w), _bounded_fd_gradient(f, w, lo, hi, cfg.fd_step)

    f_init = f(w0)
    bounds = [(None if not np.isfinite(a) else a, None if not np.isfinite(b) else b)
              for a, b in wb]
    # stop on the projected gradient or on a step below xtol.  The relative
    # reduction test is off: with every parameter boxed the first step is the
    # raw gradient, and a short first step would end the run.
    last = {"w": w0, "small_step": False}

    def callback(intermediate_result):
        step = np.max(np.abs(intermediate_result.x - last["w"]))
        last["w"] = np.array(intermediate_result.x, dtype=float)
        if step < cfg.xtol:
            last["small_step"] = True
            raise StopIteration

    res = optimize.minimize(fg, w0, jac=True, method="L-BFGS-B", bounds=bounds,
                            callback=callback,
                            options={"maxiter": cfg.maxiter, "gtol": cfg.gtol, "ftol": 0.0})
    w = best["w"]
    params = params_at(w)
    est = {s.name: get_param(params, s.name) for s in specs}
    at_bound = [s.name for s in specs if _at_bound(s, est[s.name])]
    converged = (bool(res.success) or last["small_step"]) and res.nit < cfg.maxiter
    ll = -best["f"] * n
    rec = {"stage": label, "params": [s.name for s in specs],
           "loglik_start": float(-f_init * n), "loglik": float(ll),
           "iterations": int(res.nit), "converged": converged}
    return FitResult(estimates=est, loglik=float(ll), converged=converged,
                     at_bound=at_bound, iterations=int(res.nit), n_evals=evals[0],
                     message=str(res.message), trace=[rec], params=params)


def maximize(panel: SpaceTimePanel, init: SchlatherModelParams, cfg: FitConfig, u: float,
             K: LagSet, raise_on_failure: bool = False, data: PairData = None) -> FitResult:
    """Maximize the pairwise log-likelihood over ``cfg.specs`` by L-BFGS-B.

    The objective is the negative log-likelihood over sqrt(pair count) on the
    working scale with finite-difference gradients.  The returned estimate is the
    best iterate seen, so its log-likelihood is never below that at ``init``.
    With ``raise_on_failure`` a non-converged fit raises NoConvergence with
    the result attached as ``err.last``.
    """
    data = data if data is not None else prepare_pairs(panel, u, K)
    res = _maximize_data(data, init, cfg.specs, cfg)
    if raise_on_failure and not res.converged:
        raise NoConvergence(f"optimizer stopped: {res.message}", last=res)
    return res


def staged_fit(panel: SpaceTimePanel, init: SchlatherModelParams, cfg: FitConfig, u: float,
               K: LagSet, data: PairData = None) -> FitResult:
    """Fit the stages of ``cfg`` in turn, then all parameters jointly."""
    data = data if data is not None else prepare_pairs(panel, u, K)
    stages = [g for g in cfg.stages if g]
    names = cfg.names
    if not stages or (len(stages) == 1 and set(stages[0]) == set(names)):
        return _maximize_data(data, init, cfg.specs, cfg)
    current = init
    trace = []
    evals = 0
    for i, group in enumerate(stages):
        r = _maximize_data(data, current, [cfg.spec(nm) for nm in group], cfg,
                           label=f"stage{i + 1}")
        current = r.params
        trace += r.trace
        evals += r.n_evals
    final = _maximize_data(data, current, cfg.specs, cfg)
    final.trace = trace + final.trace
    final.n_evals += evals
    return final


@dataclass
class JackknifeResult:
    names: list
    estimate: np.ndarray
    variance: np.ndarray
    per_block: list
    full_fit: FitResult = field(default=None, repr=False)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.variance), 0.0, None))

    def to_dict(self) -> dict:
        return {"names": list(self.names),
                "estimate": [float(x) for x in self.estimate],
                "se": [float(x) for x in self.se],
                "variance": [[float(x) for x in row] for row in self.variance],
                "per_block": self.per_block}


def jackknife_variance(full, leave_out, sizes):
    """Delete-m_j block jackknife variance for possibly unequal blocks.

    ``full`` is the full-sample estimate, ``leave_out`` the (g, p) matrix of
    leave-one-block-out estimates and ``sizes`` the block sizes.  With equal
    blocks this is ((g-1)/g) sum_j (theta_j - mean)(theta_j - mean)^T.
    """
    theta = np.asarray(full, dtype=float)
    est = np.atleast_2d(np.asarray(leave_out, dtype=float))
    m = np.asarray(sizes, dtype=float)
    g = est.shape[0]
    if g < 2:
        raise InsufficientData("need at least two blocks for the jackknife")
    n = m.sum()
    hj = n / m
    theta_j = g * theta - ((1 - m / n)[:, None] * est).sum(axis=0)
    pseudo = hj[:, None] * theta - (hj - 1)[:, None] * est
    dev = pseudo - theta_j
    var = (dev[:, :, None] * dev[:, None, :] / (hj - 1)[:, None, None]).sum(axis=0) / g
    return (var + var.T) / 2


def block_jackknife(panel: SpaceTimePanel, init: SchlatherModelParams, cfg: FitConfig,
                    u: float, K: LagSet, fit: Callable = staged_fit,
                    workers: int = 1, full_fit: FitResult = None) -> JackknifeResult:
    """Leave-one-block-out jackknife for the pairwise likelihood estimator.

    Each replicate is started at the full-data estimate.  Replicates run in
    ``workers`` threads; results do not depend on the worker count.
    """
    blocks = panel.blocks
    if len(blocks) < 3:
        raise InsufficientData(f"need at least 3 blocks, got {len(blocks)}")
    full = full_fit if full_fit is not None else fit(panel, init, cfg, u, K)
    names = cfg.names
    theta = np.array([full.estimates[nm] for nm in names])
    sizes = panel.block_sizes()

    def run(label):
        try:
            r = fit(panel.drop_block(label), full.params, cfg, u, K)
            return label, r, None
        except StxtremeError as err:
            return label, None, f"{type(err).__name__}: {err}"

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            out = list(ex.map(run, blocks))
    else:
        out = [run(b) for b in blocks]
    per_block, ok_est, ok_sizes, failed = [], [], [], []
    for label, r, err in out:
        rec = {"block": label, "size": int(sizes[label])}
        if r is None:
            rec.update(success=False, error=err)
            failed.append(label)
        else:
            rec.update(success=True, converged=r.converged,
                       estimates={k: float(v) for k, v in r.estimates.items()})
            ok_est.append([r.estimates[nm] for nm in names])
            ok_sizes.append(sizes[label])
        per_block.append(rec)
    var = (jackknife_variance(theta, ok_est, ok_sizes) if len(ok_est) >= 2
           else np.full((len(names), len(names)), np.nan))
    result = JackknifeResult(names, theta, var, per_block, full)
    if failed:
        raise JackknifeIncomplete(f"{len(failed)} block refits failed", failed, result)
    return result
