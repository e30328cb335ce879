import csv
import json
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np
import pytest

from stxtreme.cli import main
from stxtreme.config import Config, KEYS
from stxtreme.io import read_panel_csv

DATA = Path(__file__).parent / "data"


def run(tmp_path, command, cfg_text=None, config=None, out="out", args=()):
    if config is None:
        config = tmp_path / f"{command}.cfg"
        config.write_text(cfg_text, encoding="utf-8")
    out_dir = tmp_path / out
    code = main([command, "--config", str(config), "--out", str(out_dir), *args])
    return code, out_dir


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def tree_bytes(d):
    return {p.name: p.read_bytes() for p in sorted(Path(d).iterdir())
            if p.name != "timing.json"}


def write_wide(path, times, columns):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", *columns])
        for j, t in enumerate(times):
            w.writerow([t.strftime("%Y-%m-%dT%H:%M:%S"),
                        *("" if np.isnan(v[j]) else repr(float(v[j])) for v in columns.values())])


def summer_times(years, days=92):
    out = []
    for y in years:
        t0 = datetime(y, 6, 1)
        out += [t0 + timedelta(hours=h) for h in range(days * 24)]
    return out


# ---------------------------------------------------------------- transform

@pytest.fixture
def raw_panel(tmp_path):
    rng = np.random.default_rng(1)
    times = summer_times([2001, 2002, 2003], days=30)
    cols = {f"st{i}": rng.gamma(0.5, 2.0, size=len(times)) for i in range(10)}
    cols["st3"][100:130] = np.nan
    path = tmp_path / "raw.csv"
    write_wide(path, times, cols)
    return path, times, cols


def test_transform_roundtrip_and_shape(tmp_path, raw_panel):
    path, times, cols = raw_panel
    code, out = run(tmp_path, "transform", f"data.panel = {path}\nmargins.quantile = 0.95\n")
    assert code == 0
    z = read_panel_csv(out / "panel_frechet.csv")
    assert z.values.shape == (10, len(times))
    assert z.station_ids == tuple(cols)
    assert np.array_equal(np.isnan(z.values), np.isnan(np.vstack(list(cols.values()))))
    margins = json.loads((out / "margins.json").read_text())
    assert set(margins) == set(cols)
    assert max(m["max_tail_roundtrip_error"] for m in margins.values()) < 1e-8
    # summers only: one block per year
    assert sorted(set(z.block_labels.tolist())) == [2001, 2002, 2003]


def test_transform_idempotent(tmp_path, raw_panel):
    path = raw_panel[0]
    cfg = f"data.panel = {path}\n"
    _, a = run(tmp_path, "transform", cfg, out="a")
    _, b = run(tmp_path, "transform", cfg, out="b")
    assert tree_bytes(a) == tree_bytes(b)


def test_transform_constant_column(tmp_path):
    times = summer_times([2001], days=60)
    path = tmp_path / "raw.csv"
    write_wide(path, times, {"good": np.random.default_rng(0).gamma(1.0, size=len(times)),
                             "flat": np.full(len(times), 3.0)})
    code, out = run(tmp_path, "transform", f"data.panel = {path}\n")
    assert code == 1
    err = json.loads((out / "error.json").read_text())
    assert err["error"] == "InsufficientData"
    assert "flat" in err["message"]


def test_malformed_row_reports_line(tmp_path):
    path = tmp_path / "raw.csv"
    path.write_text("timestamp,a\n2001-06-01T00:00:00,1.0\n2001-06-01T01:00:00,abc\n")
    code, out = run(tmp_path, "transform", f"data.panel = {path}\n")
    err = json.loads((out / "error.json").read_text())
    assert code == 1 and err["error"] == "ParseError" and err["line"] == 3


def test_config_errors(tmp_path):
    code, out = run(tmp_path, "fit", "data.panel\n")
    err = json.loads((out / "error.json").read_text())
    assert code == 1 and err["error"] == "ParseError" and err["line"] == 1
    code, out = run(tmp_path, "fit", "fit.free = corr.lam\n", out="o2")
    assert code == 1
    assert "data.panel" in json.loads((out / "error.json").read_text())["message"]


# ---------------------------------------------------------------- simulate / fit

def test_simulate_byte_identical(tmp_path):
    config = DATA / "simulate.cfg"
    _, a = run(tmp_path, "simulate", config=config, out="a", args=("--seed", "7"))
    _, b = run(tmp_path, "simulate", config=config, out="b", args=("--seed", "7"))
    _, c = run(tmp_path, "simulate", config=config, out="c", args=("--seed", "7",
                                                                   "--threads", "3"))
    _, d = run(tmp_path, "simulate", config=config, out="d", args=("--seed", "8"))
    assert tree_bytes(a) == tree_bytes(b) == tree_bytes(c)
    assert (a / "panel.csv").read_bytes() != (d / "panel.csv").read_bytes()
    # the packaged fixture is this run
    assert (a / "panel.csv").read_bytes() == (DATA / "panel.csv").read_bytes()
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["seed"] == 7 and "panel.csv" in manifest["outputs"]
    assert json.loads((a / "timing.json").read_text())["wall_seconds"] > 0


def test_simulate_panel_reads_back(tmp_path):
    _, out = run(tmp_path, "simulate", config=DATA / "simulate.cfg", args=("--seed", "7"))
    raw = read_panel_csv(out / "panel.csv")
    assert raw.values.shape == (1, 4 * 2001)
    assert len(set(raw.block_labels.tolist())) == 4
    diag = json.loads((out / "diagnostics.json").read_text())
    assert [d["replicate"] for d in diag] == [0, 1, 2, 3]


def test_fit_matches_golden(tmp_path):
    code, out = run(tmp_path, "fit", config=DATA / "fit.cfg")
    assert code == 0
    got = json.loads((out / "fit.json").read_text())
    gold = json.loads((DATA / "golden_fit.json").read_text())
    assert got["success"] and got["lags"] == gold["lags"]
    for k, v in gold["estimates"].items():
        assert got["estimates"][k] == pytest.approx(v, rel=1e-6)
    assert got["loglik"] == pytest.approx(gold["loglik"], rel=1e-9)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["pair_count"] == 47772
    assert manifest["inputs"][1]["path"] == "panel.csv"


def test_fit_threads_identical(tmp_path):
    _, a = run(tmp_path, "fit", config=DATA / "fit.cfg", out="a")
    _, b = run(tmp_path, "fit", config=DATA / "fit.cfg", out="b", args=("--threads", "2"))
    assert tree_bytes(a) == tree_bytes(b)


def test_jackknife_blocks(tmp_path):
    cfg = (DATA / "fit.cfg").read_text().replace("data.panel = panel.csv",
                                                 f"data.panel = {DATA / 'panel.csv'}")
    cfg = cfg.replace("fit.free = corr.lam, set.mu", "fit.free = corr.lam")
    code, out = run(tmp_path, "jackknife", cfg)
    assert code == 0
    rows = read_rows(out / "jackknife_blocks.csv")
    assert [r["block"] for r in rows] == ["2001", "2002", "2003", "2004"]
    res = json.loads((out / "jackknife.json").read_text())
    assert res["variance"][0][0] > 0


# ---------------------------------------------------------------- coefficients / alpha

def test_coeffs_outputs(tmp_path):
    cfg = (DATA / "fit.cfg").read_text().replace("data.panel = panel.csv",
                                                 f"data.panel = {DATA / 'panel.csv'}")
    cfg += "coeffs.max_lag = 6\ncoeffs.model = true\ncoeffs.triples = 0:0,0:2,0:5\n"
    code, out = run(tmp_path, "coeffs", cfg, args=("--seed", "3"))
    assert code == 0
    emp = read_rows(out / "coeffs_empirical.csv")
    model = read_rows(out / "coeffs_model.csv")
    assert len(emp) == len(model) == 7
    assert float(emp[0]["theta2"]) == 1.0 and float(model[0]["theta2"]) == 1.0
    tri = read_rows(out / "theta3.csv")
    assert len(tri) == 1 and 1.0 <= float(tri[0]["model"]) <= 3.0


def test_coeffs_flags_select_outputs(tmp_path):
    cfg = (DATA / "fit.cfg").read_text().replace("data.panel = panel.csv",
                                                 f"data.panel = {DATA / 'panel.csv'}")
    cfg += "coeffs.max_lag = 3\n"
    _, out = run(tmp_path, "coeffs", cfg, args=("--model",))
    assert (out / "coeffs_model.csv").exists()
    assert not (out / "coeffs_empirical.csv").exists()


def test_efficiency_rows(tmp_path):
    cfg = "efficiency.n_mc = 3\nefficiency.series_length = 20000\n"
    code, out = run(tmp_path, "efficiency", cfg,
                    args=("--model", "ar1", "--family", "powers", "--Kmax", "9"))
    assert code == 0
    rows = read_rows(out / "efficiency.csv")
    assert len(rows) == 9
    assert list(rows[0]) == ["model", "family", "K", "are", "mc_se"]
    assert [int(r["K"]) for r in rows] == list(range(1, 10))


def test_alpha_command(tmp_path):
    cfg = ("model.set = interval\nparam.set.mu = 13.333333333333334\nparam.corr.lam = 4\n"
           "alpha.s = 0\nalpha.t = 0, 5, 30\n")
    code, out = run(tmp_path, "alpha", cfg)
    rows = read_rows(out / "alpha.csv")
    assert code == 0 and len(rows) == 3
    assert float(rows[0]["alpha"]) == 1.0 and float(rows[2]["alpha"]) == 0.0


# ---------------------------------------------------------------- config hash

def test_config_hash_semantics():
    a = Config.parse("param.corr.lam = 4\nfit.lags = powers:6\nbounds.set.mu = 0.5, 23.5\n")
    same = Config.parse("# comment\nbounds.set.mu=0.5,23.5\nfit.lags = powers:6  # x\n"
                        "param.corr.lam = 4.0\nrun.threads = 8\n")
    assert a.hash() == same.hash()
    for changed in ("param.corr.lam = 5\nfit.lags = powers:6\nbounds.set.mu = 0.5, 23.5\n",
                    "param.corr.lam = 4\nfit.lags = powers:7\nbounds.set.mu = 0.5, 23.5\n",
                    "param.corr.lam = 4\nfit.lags = powers:6\nbounds.set.mu = 0.5, 23\n",
                    "param.corr.lam = 4\nfit.lags = powers:6\nbounds.set.mu = 0.5, 23.5\n"
                    "run.seed = 1\n"):
        assert Config.parse(changed).hash() != a.hash()


def test_duplicate_key_rejected():
    from stxtreme.errors import ParseError
    with pytest.raises(ParseError) as e:
        Config.parse("a = 1\na = 2\n")
    assert e.value.line == 2


def test_help_lists_every_key(capsys):
    with pytest.raises(SystemExit):
        main(["fit", "--help"])
    text = capsys.readouterr().out
    for key in KEYS:
        assert key in text


def test_irregular_summer_panel_on_grid(tmp_path):
    # hourly summer data with a missing day: lags are computed on the hourly grid
    times = summer_times([2001, 2002], days=20)
    drop = set(range(240, 264))
    keep = [t for i, t in enumerate(times) if i not in drop]
    rng = np.random.default_rng(4)
    z = -1.0 / np.log(rng.uniform(size=len(keep)))
    path = tmp_path / "frechet.csv"
    write_wide(path, keep, {"a": z})
    cfg = (f"data.panel = {path}\nmodel.corr = exp\nmodel.set = interval\n"
           "param.corr.lam = 4\nparam.set.mu = 13.333333333333334\nfit.free = corr.lam\n"
           "fit.lags = explicit:0,1\nbounds.corr.lam = 0.05, 148\ntransform.corr.lam = log\n")
    code, out = run(tmp_path, "fit", cfg)
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    # 2 summers of 480 hours minus the pairs touching the missing day
    assert manifest["pair_count"] == 2 * 479 - 25
