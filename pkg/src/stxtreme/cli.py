"""Command-line interface.

    stxtreme <transform|simulate|fit|jackknife|coeffs|efficiency|alpha>
             --config <path> [--seed N] [--threads N] [--out DIR]

Every command writes its results, a ``manifest.json`` (inputs, config hash,
seed, versions, pair counts, output digests) and a separate ``timing.json``
with the wall time, so that everything except ``timing.json`` is a pure
function of the inputs, the config and the seed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import Config, keys_help
from .correlation import ExpCorrParams, GneitingCorrParams
from .efficiency import are_curve
from .empirical import censored_theta3_hat, coefficient_panel, frechet_threshold
from .errors import JackknifeIncomplete, ParseError, StxtremeError
from .inference import FitConfig, block_jackknife, staged_fit
from .io import (read_panel_csv, read_stations, regular_grid, synthetic_times, write_panel_csv,
                 write_rows_csv, write_stations)
from .likelihood import (_DEFAULT_SPECS, LagSet, ParamSpec, SpaceTimePanel, make_lag_set,
                         pair_count)
from .margins import fit_marginal, from_unit_frechet, to_unit_frechet
from .model import SchlatherModelParams, theta2, theta3_mc
from .randomset import CylinderSetParams, IntervalSetParams, alpha, alpha_mc_oracle
from .simulate import SimConfig, simulate_schlather_randomset, spawn_seeds

COMMANDS = ("transform", "simulate", "fit", "jackknife", "coeffs", "efficiency", "alpha")


# --------------------------------------------------------------------------
# config helpers


def build_model(cfg: Config) -> SchlatherModelParams:
    corr_kind = cfg.get("model.corr", "exp")
    set_kind = cfg.get("model.set", "interval")
    pc = {k: float(v) for k, v in cfg.with_prefix("param.corr.").items()}
    ps = {k: float(v) for k, v in cfg.with_prefix("param.set.").items()}
    try:
        if corr_kind == "exp":
            corr = ExpCorrParams(**pc)
        elif corr_kind == "gneiting":
            corr = GneitingCorrParams(**pc)
        else:
            raise ParseError(f"model.corr must be exp or gneiting, got {corr_kind!r}",
                             path=cfg.path)
        if set_kind == "interval":
            rset = IntervalSetParams(**ps)
        elif set_kind == "cylinder":
            rset = CylinderSetParams(**ps)
        else:
            raise ParseError(f"model.set must be interval or cylinder, got {set_kind!r}",
                             path=cfg.path)
    except TypeError as err:
        raise ParseError(f"bad model parameters: {err}", path=cfg.path) from None
    return SchlatherModelParams(corr, rset)


def parse_lags(spec: str, base: float = 2.0) -> LagSet:
    kind, _, arg = spec.partition(":")
    kind = kind.strip()
    if kind == "explicit":
        return LagSet(tuple(int(x) for x in arg.split(",") if x.strip()), "explicit")
    if kind in ("all", "powers", "fibonacci"):
        return make_lag_set(kind, int(arg), base)
    raise ValueError(f"unknown lag set {spec!r}")


def build_fit_config(cfg: Config, workers: int) -> FitConfig:
    free = cfg.get_list("fit.free", [])
    if not free:
        raise ParseError("fit.free lists no parameters", path=cfg.path)
    specs = []
    for name in free:
        attr = name.split(".", 1)[-1]
        if attr not in _DEFAULT_SPECS:
            raise ParseError(f"unknown parameter {name!r}", path=cfg.path)
        lo, hi, tr = _DEFAULT_SPECS[attr]
        if f"bounds.{name}" in cfg:
            b = cfg.get_floats(f"bounds.{name}")
            if len(b) != 2:
                raise ParseError(f"bounds.{name} needs two numbers", path=cfg.path)
            lo, hi = b
        tr = cfg.get(f"transform.{name}", tr)
        specs.append(ParamSpec(name, lo, hi, tr))
    stages = [[x.strip() for x in g.split(",") if x.strip()]
              for g in cfg.get("fit.stages", "").split(";") if g.strip()]
    return FitConfig(specs=tuple(specs), stages=tuple(tuple(g) for g in stages),
                     gtol=cfg.get_float("fit.gtol", 1e-5),
                     xtol=cfg.get_float("fit.xtol", 1e-8),
                     maxiter=cfg.get_int("fit.maxiter", 500),
                     fd_step=cfg.get_float("fit.fd_step", 1e-5), workers=workers)


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Run:
    """State shared by one command invocation."""

    def __init__(self, command, cfg: Config, seed, threads, out):
        self.command = command
        self.cfg = cfg
        self.seed = seed
        self.threads = threads
        self.out = Path(out)
        self.inputs = []
        self.outputs = []
        self.extra = {}

    def input(self, path):
        """Register an input file; relative paths are taken from the config's directory."""
        full = Path(path)
        if not full.is_absolute() and self.cfg.path is not None:
            full = Path(self.cfg.path).parent / full
        self.inputs.append({"path": str(path), "sha256": _sha256(full)})
        return full

    def path(self, name):
        self.outputs.append(name)
        return self.out / name

    def write_json(self, name, obj):
        self.path(name).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n",
                                   encoding="utf-8")

    def manifest(self):
        return {
            "command": self.command,
            "stxtreme_version": __version__,
            "config_hash": self.cfg.hash(),
            "seed": self.seed,
            "inputs": self.inputs,
            "versions": {"python": platform.python_version(), "numpy": np.__version__,
                         "scipy": scipy.__version__},
            "outputs": {n: _sha256(self.out / n) for n in sorted(set(self.outputs))},
            **self.extra,
        }


def load_panel(run: Run) -> SpaceTimePanel:
    cfg = run.cfg
    path = run.input(cfg.require("data.panel"))
    raw = regular_grid(read_panel_csv(path), path)
    z = raw.values
    if cfg.get("data.scale", "frechet") == "raw":
        q = cfg.get_float("margins.quantile", 0.97)
        z = np.vstack([to_unit_frechet(fit_marginal(x, q, name=sid), x)
                       for sid, x in zip(raw.station_ids, raw.values)])
    coords = None
    if "data.stations" in cfg:
        ids, xy = read_stations(run.input(cfg.get("data.stations")))
        lookup = dict(zip(ids, xy))
        missing = [s for s in raw.station_ids if s not in lookup]
        if missing:
            raise ParseError(f"stations missing from the stations file: {missing}")
        coords = np.array([lookup[s] for s in raw.station_ids])
    elif len(raw.station_ids) > 1:
        raise ParseError("data.stations is required for panels with several stations")
    return SpaceTimePanel(z, coords, raw.block_labels, raw.station_ids,
                          times=tuple(raw.times))


def _threshold(cfg, key="fit.threshold_quantile"):
    return frechet_threshold(cfg.get_float(key, 0.95))


# --------------------------------------------------------------------------
# commands


def cmd_transform(run: Run):
    cfg = run.cfg
    raw = read_panel_csv(run.input(cfg.require("data.panel")))
    q = cfg.get_float("margins.quantile", 0.97)
    if not 0.5 < q < 1:
        raise ParseError("margins.quantile must lie in (0.5, 1)", path=cfg.path)
    margins, z = {}, []
    for sid, x in zip(raw.station_ids, raw.values):
        m = fit_marginal(x, q, name=sid)
        margins[sid] = m.to_dict()
        zs = to_unit_frechet(m, x)
        back = from_unit_frechet(m, zs)
        tail = x > m.u
        margins[sid]["max_tail_roundtrip_error"] = float(
            np.max(np.abs(back[tail] - x[tail]))) if tail.any() else 0.0
        z.append(zs)
    write_panel_csv(run.path("panel_frechet.csv"), np.vstack(z), raw.times, raw.station_ids)
    run.write_json("margins.json", margins)


def cmd_simulate(run: Run):
    cfg = run.cfg
    p = build_model(cfg)
    coords, ids = None, ("s0",)
    if "data.stations" in cfg:
        ids, coords = read_stations(run.input(cfg.get("data.stations")))
    n_times = cfg.get_int("simulate.n_times", 2001)
    reps = cfg.get_int("simulate.replicates", 1)
    if n_times > 8760:
        raise ParseError("simulate.n_times must fit in one year (<= 8760)", path=cfg.path)
    base = SimConfig(n_times=n_times, coords=coords,
                     eps_sim=cfg.get_float("simulate.eps_sim", 0.1),
                     M=cfg.get_float("simulate.M", 4.0),
                     max_storms=cfg.get_int("simulate.max_storms", 1_000_000))
    panels, diags = [], []
    for j, s in enumerate(spawn_seeds(run.seed, reps)):
        res = simulate_schlather_randomset(p, SimConfig(**{**base.__dict__, "seed": s}))
        panels.append(res.panel.z)
        diags.append({"replicate": j, **res.diagnostics})
    write_panel_csv(run.path("panel.csv"), np.hstack(panels),
                    synthetic_times(n_times, reps), ids)
    if coords is not None:
        write_stations(run.path("stations.csv"), ids, coords)
    run.write_json("diagnostics.json", diags)


def _fit(run: Run):
    cfg = run.cfg
    panel = load_panel(run)
    init = build_model(cfg)
    fcfg = build_fit_config(cfg, run.threads)
    K = parse_lags(cfg.get("fit.lags", "all:1"), cfg.get_float("fit.lag_base", 2.0))
    u = _threshold(cfg)
    run.extra["pair_count"] = pair_count(panel, K)
    run.extra["threshold"] = u
    run.extra["lags"] = list(K.lags)
    return panel, init, fcfg, u, K


def cmd_fit(run: Run):
    panel, init, fcfg, u, K = _fit(run)
    res = staged_fit(panel, init, fcfg, u, K)
    run.write_json("fit.json", {**res.to_dict(), "threshold": u, "lags": list(K.lags)})


def cmd_jackknife(run: Run):
    panel, init, fcfg, u, K = _fit(run)
    inner = FitConfig(**{**fcfg.__dict__, "workers": 1})
    try:
        res = block_jackknife(panel, init, inner, u, K, workers=run.threads)
        err = None
    except JackknifeIncomplete as e:
        res, err = e.result, e
    run.write_json("jackknife.json", res.to_dict())
    rows = []
    for b in res.per_block:
        row = {"block": b["block"], "size": b["size"], "success": b["success"]}
        row.update(b.get("estimates", {}))
        rows.append(row)
    write_rows_csv(run.path("jackknife_blocks.csv"), rows,
                   ["block", "size", "success", *res.names])
    if err is not None:
        raise err


def _parse_triples(spec):
    triples = []
    for grp in spec.split(";"):
        if not grp.strip():
            continue
        members = []
        for m in grp.split(","):
            s, _, o = m.partition(":")
            members.append((int(s), int(o)))
        if len(members) != 3:
            raise ValueError(f"a triple needs three station:offset members, got {grp!r}")
        triples.append(members)
    return triples


def cmd_coeffs(run: Run):
    cfg = run.cfg
    panel = load_panel(run)
    max_lag = cfg.get_int("coeffs.max_lag", 24)
    u = _threshold(cfg, "coeffs.threshold_quantile")
    want_emp = cfg.get_bool("coeffs.empirical", True)
    want_model = cfg.get_bool("coeffs.model", False)
    ids = panel.station_ids
    cols = ["row_station", "col_station", "lag", "theta2", "ci_lo", "ci_hi"]
    if want_emp:
        grid = coefficient_panel(panel, range(max_lag + 1), u=u)
        write_rows_csv(run.path("coeffs_empirical.csv"), list(grid.rows()), cols)
        indep = [{"row_station": ids[r], "col_station": ids[c], "indep_lag": v}
                 for (r, c), v in grid.indep.items()]
        write_rows_csv(run.path("coeffs_indep.csv"), indep,
                       ["row_station", "col_station", "indep_lag"])
    p = build_model(cfg) if want_model else None
    if want_model:
        rows = []
        for r in range(panel.n_stations):
            for c in range(panel.n_stations):
                d = panel.coords[r] - panel.coords[c]
                s, th = float(np.hypot(*d)), float(np.arctan2(d[1], d[0]))
                for h in range(max_lag + 1):
                    val = 1.0 if (r == c and h == 0) else float(
                        theta2(p.rho(s, h), p.alpha(s, h, th)))
                    rows.append({"row_station": ids[r], "col_station": ids[c],
                                 "lag": h, "theta2": val})
        write_rows_csv(run.path("coeffs_model.csv"), rows, cols[:4])
    if "coeffs.triples" in cfg:
        n_draws = cfg.get_int("coeffs.n_draws", 100_000)
        seeds = spawn_seeds(run.seed, 1000)
        rows = []
        for k, tri in enumerate(_parse_triples(cfg.get("coeffs.triples"))):
            series = [panel.z[s] for s, _ in tri]
            offs = [o for _, o in tri]
            row = {"triple": ";".join(f"{ids[s]}:{o}" for s, o in tri)}
            if want_emp:
                e = censored_theta3_hat(series, offs, u, panel.block_labels)
                row.update(empirical=e.value, ci_lo=e.ci_lower, ci_hi=e.ci_upper)
            if want_model:
                pts = [np.r_[panel.coords[s], o] if isinstance(p.set, CylinderSetParams)
                       else np.array([float(o)]) for s, o in tri]
                m, se = theta3_mc(p, *pts, n_draws=n_draws, seed=seeds[k])
                row.update(model=m, model_se=se)
            rows.append(row)
        write_rows_csv(run.path("theta3.csv"), rows,
                       ["triple", "empirical", "ci_lo", "ci_hi", "model", "model_se"])


def cmd_efficiency(run: Run):
    cfg = run.cfg
    model = cfg.get("efficiency.model", "ar1")
    family = cfg.get("efficiency.family", "powers")
    kmax = cfg.get_int("efficiency.Kmax", 9)
    curve = are_curve(model, family, kmax, cfg.get_float("efficiency.lambda", 0.6),
                      cfg.get_float("efficiency.sigma", 1.0),
                      cfg.get_int("efficiency.T", 500),
                      n_mc=cfg.get_int("efficiency.n_mc", 20), seed=run.seed,
                      series_length=cfg.get_int("efficiency.series_length", 200_000))
    rows = [r.row(family, k) for k, r in enumerate(curve, start=1)]
    write_rows_csv(run.path("efficiency.csv"), rows, ["model", "family", "K", "are", "mc_se"])


def cmd_alpha(run: Run):
    cfg = run.cfg
    p = build_model(cfg)
    ss = cfg.get_floats("alpha.s", [0.0])
    ts = cfg.get_floats("alpha.t", [0.0])
    th = cfg.get_float("alpha.theta", 0.0)
    n_mc = cfg.get_int("alpha.mc_draws", 0)
    seeds = spawn_seeds(run.seed, len(ss) * len(ts))
    rows = []
    k = 0
    for s in ss:
        for t in ts:
            row = {"s": s, "t": t, "theta": th, "alpha": float(alpha(p.set, s, t, th))}
            if n_mc and isinstance(p.set, CylinderSetParams):
                m, se = alpha_mc_oracle(p.set, s, t, th, n_draws=n_mc, seed=seeds[k])
                row.update(mc=m, mc_se=se)
            rows.append(row)
            k += 1
    write_rows_csv(run.path("alpha.csv"), rows, ["s", "t", "theta", "alpha", "mc", "mc_se"])


HANDLERS = {"transform": cmd_transform, "simulate": cmd_simulate, "fit": cmd_fit,
            "jackknife": cmd_jackknife, "coeffs": cmd_coeffs, "efficiency": cmd_efficiency,
            "alpha": cmd_alpha}


# --------------------------------------------------------------------------
# entry point


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stxtreme", formatter_class=argparse.RawDescriptionHelpFormatter,
        description="Space-time extremes: margins, simulation, pairwise-likelihood "
                    "fits and extremal coefficients.",
        epilog="config keys (flat 'key = value' text, '#' comments):\n" + keys_help())
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, formatter_class=argparse.RawDescriptionHelpFormatter,
                            epilog="config keys:\n" + keys_help())
        sp.add_argument("--config", required=True, help="run configuration file")
        sp.add_argument("--seed", type=int, default=None, help="master seed")
        sp.add_argument("--threads", type=int, default=1, help="worker cap")
        sp.add_argument("--out", default=".", help="output directory")
        if name == "efficiency":
            sp.add_argument("--model", choices=("ar1", "ma1"))
            sp.add_argument("--family", choices=("all", "powers", "fibonacci"))
            sp.add_argument("--Kmax", type=int)
        if name == "coeffs":
            sp.add_argument("--model", action="store_true", help="emit model coefficients")
            sp.add_argument("--empirical", action="store_true",
                            help="emit empirical coefficients")
    return parser


def _apply_flags(args, cfg: Config):
    if args.command == "efficiency":
        for flag, key in (("model", "efficiency.model"), ("family", "efficiency.family"),
                          ("Kmax", "efficiency.Kmax")):
            if getattr(args, flag) is not None:
                cfg.set(key, getattr(args, flag))
    if args.command == "coeffs" and (args.model or args.empirical):
        cfg.set("coeffs.model", bool(args.model))
        cfg.set("coeffs.empirical", bool(args.empirical))


def _error_json(err) -> dict:
    out = {"error": type(err).__name__, "message": str(err)}
    for attr in ("line", "path", "failed_blocks"):
        if getattr(err, attr, None) is not None:
            out[attr] = getattr(err, attr)
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    start = time.perf_counter()
    try:
        if args.threads < 1:
            raise ValueError("--threads must be at least 1")
        cfg = Config.load(args.config)
        _apply_flags(args, cfg)
        seed = args.seed if args.seed is not None else cfg.get_int("run.seed", 0)
        cfg.set("run.seed", seed)
        out.mkdir(parents=True, exist_ok=True)
        run = Run(args.command, cfg, seed, args.threads, out)
        run.inputs.append({"path": str(args.config), "sha256": _sha256(args.config)})
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            HANDLERS[args.command](run)
        run.write_json("manifest.json", run.manifest())
    except (StxtremeError, ValueError, OSError) as err:
        payload = _error_json(err)
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(json.dumps(payload, indent=2, sort_keys=True)
                                            + "\n", encoding="utf-8")
        except OSError:
            pass
        print(json.dumps(payload, sort_keys=True), file=sys.stderr)
        return 1
    (out / "timing.json").write_text(
        json.dumps({"wall_seconds": time.perf_counter() - start}) + "\n", encoding="utf-8")
    return 0


if __name__ == "__main__":
    sys.exit(main())
