"""Flat ``key = value`` run configuration with dotted section keys."""

from __future__ import annotations

import hashlib
from pathlib import Path

from .errors import ParseError

# keys that never change results and are left out of the config hash
RUNTIME_KEYS = {"run.threads", "run.out"}

KEYS = {
    "data.panel": "panel CSV, relative to the config file (wide: timestamp + one column per station, or long: "
                  "station_id,timestamp,value)",
    "data.stations": "stations CSV (relative to the config file) with columns station_id,x_km,y_km",
    "data.scale": "raw (transform margins first) or frechet (default frechet)",
    "margins.quantile": "marginal threshold quantile for the GPD tail (default 0.97)",
    "model.corr": "exp or gneiting",
    "model.set": "interval or cylinder",
    "param.<corr|set>.<name>": "parameter value (initial value when free), e.g. "
                               "param.corr.lam = 4",
    "bounds.<corr|set>.<name>": "box for a free parameter: lower, upper",
    "transform.<corr|set>.<name>": "working scale of a free parameter: identity, log, logit",
    "fit.free": "comma-separated free parameters, e.g. corr.lam, set.mu",
    "fit.stages": "semicolon-separated groups of free parameters fitted in turn",
    "fit.threshold_quantile": "censoring threshold as a unit-Fréchet quantile (default 0.95)",
    "fit.lags": "lag set: all:K, powers:K, fibonacci:K or explicit:h1,h2,...",
    "fit.lag_base": "base a of the powers family (default 2)",
    "fit.maxiter": "optimizer iteration cap (default 500)",
    "fit.gtol": "projected-gradient tolerance (default 1e-5)",
    "fit.xtol": "step tolerance on the working scale (default 1e-8)",
    "fit.fd_step": "relative finite-difference step (default 1e-5)",
    "simulate.n_times": "time points per replicate (default 2001)",
    "simulate.replicates": "number of independent replicates, written as year blocks",
    "simulate.eps_sim": "truncation tolerance (default 0.1)",
    "simulate.M": "Gaussian sup bound in the stopping rule (default 4)",
    "simulate.max_storms": "budget of relevant storms per replicate (default 1e6)",
    "coeffs.max_lag": "largest lag of the theta2 curves (default 24)",
    "coeffs.threshold_quantile": "threshold of the empirical estimators as a unit-Fréchet "
                                 "quantile (default 0.95)",
    "coeffs.empirical": "emit empirical coefficients (true/false)",
    "coeffs.model": "emit model coefficients (true/false)",
    "coeffs.triples": "semicolon-separated station:offset triples for theta3, "
                      "e.g. 0:0,0:3,1:5",
    "coeffs.n_draws": "MC draws for model theta3 (default 1e5)",
    "efficiency.model": "ar1 or ma1",
    "efficiency.family": "all, powers or fibonacci",
    "efficiency.Kmax": "largest K of the ARE curve",
    "efficiency.lambda": "dependence parameter (default 0.6)",
    "efficiency.sigma": "innovation scale (default 1)",
    "efficiency.T": "sample size for the variances (default 500)",
    "efficiency.n_mc": "simulated series per lag set (default 20)",
    "efficiency.series_length": "length of each simulated series (default 2e5)",
    "alpha.s": "comma-separated distances (km)",
    "alpha.t": "comma-separated time lags (hr)",
    "alpha.theta": "direction of the spatial lag, radians from west-east (default 0)",
    "alpha.mc_draws": "if set, also report the MC oracle with this many draws",
    "run.seed": "master seed (overridden by --seed)",
}


class Config:
    """Ordered mapping of dotted keys to string values with typed getters."""

    def __init__(self, values=None, path=None):
        self.values = dict(values or {})
        self.path = path

    @classmethod
    def parse(cls, text: str, path=None) -> "Config":
        values = {}
        for i, line in enumerate(text.splitlines(), start=1):
            s = line.split("#", 1)[0].strip()
            if not s:
                continue
            if "=" not in s:
                raise ParseError(f"expected 'key = value', got {line.strip()!r}", i, path)
            key, val = (x.strip() for x in s.split("=", 1))
            if not key or any(c.isspace() for c in key):
                raise ParseError(f"invalid key {key!r}", i, path)
            if key in values:
                raise ParseError(f"duplicate key {key!r}", i, path)
            values[key] = val
        return cls(values, path)

    @classmethod
    def load(cls, path) -> "Config":
        p = Path(path)
        return cls.parse(p.read_text(encoding="utf-8"), str(p))

    def __contains__(self, key):
        return key in self.values

    def set(self, key, value):
        self.values[key] = str(value)

    def get(self, key, default=None):
        return self.values.get(key, default)

    def _typed(self, key, default, conv, kind):
        if key not in self.values:
            if default is _REQUIRED:
                raise ParseError(f"missing required key {key!r}", path=self.path)
            return default
        try:
            return conv(self.values[key])
        except ValueError:
            raise ParseError(f"{key} must be {kind}, got {self.values[key]!r}",
                             path=self.path) from None

    def get_float(self, key, default=None):
        return self._typed(key, default, float, "a number")

    def get_int(self, key, default=None):
        return self._typed(key, default, lambda s: int(float(s)), "an integer")

    def get_bool(self, key, default=None):
        def conv(s):
            v = s.lower()
            if v in ("1", "true", "yes", "on"):
                return True
            if v in ("0", "false", "no", "off"):
                return False
            raise ValueError(s)
        return self._typed(key, default, conv, "true or false")

    def get_list(self, key, default=None, sep=","):
        return self._typed(key, default,
                           lambda s: [x.strip() for x in s.split(sep) if x.strip()],
                           "a list")

    def get_floats(self, key, default=None):
        return self._typed(key, default,
                           lambda s: [float(x) for x in s.split(",") if x.strip()],
                           "a list of numbers")

    def require(self, key):
        return self._typed(key, _REQUIRED, str, "a string")

    def with_prefix(self, prefix):
        return {k[len(prefix):]: v for k, v in self.values.items() if k.startswith(prefix)}

    def canonical(self) -> str:
        """Sorted ``key=value`` lines with whitespace and number spellings normalized."""
        lines = [f"{k}={_canonical_value(v)}" for k, v in sorted(self.values.items())
                 if k not in RUNTIME_KEYS]
        return "\n".join(lines)

    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


_REQUIRED = object()


def _canonical_item(x: str) -> str:
    x = " ".join(x.split())
    try:
        return repr(float(x))
    except ValueError:
        return x


def _canonical_value(v: str) -> str:
    """Comma- and semicolon-separated items, numbers written as Python floats."""
    return ";".join(",".join(_canonical_item(x) for x in grp.split(","))
                    for grp in v.split(";"))


def keys_help() -> str:
    width = max(len(k) for k in KEYS)
    return "\n".join(f"  {k.ljust(width)}  {v}" for k, v in KEYS.items())
