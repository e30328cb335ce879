"""CSV input and output of station panels.

Wide format: a ``timestamp`` column (ISO-8601, hourly) followed by one
column per station, empty cells for missing values.  Long format:
``station_id,timestamp,value`` rows.  The year of each timestamp is its
block label.  Stations: ``station_id,x_km,y_km``.
"""

from __future__ import annotations

import csv
import io
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .errors import ParseError

TIME_FORMAT = "%Y-%m-%dT%H:%M"


def _parse_time(s, line, path):
    try:
        return datetime.fromisoformat(s.strip())
    except ValueError:
        raise ParseError(f"invalid timestamp {s!r}", line, path) from None


def _parse_value(s, line, path, col):
    s = s.strip()
    if s == "" or s.lower() in ("na", "nan"):
        return np.nan
    try:
        v = float(s)
    except ValueError:
        raise ParseError(f"invalid value {s!r} in column {col!r}", line, path) from None
    if not np.isfinite(v):
        raise ParseError(f"non-finite value {s!r} in column {col!r}", line, path)
    return v


class RawPanel:
    """Panel values as read from disk, before any transformation."""

    def __init__(self, values, times, station_ids):
        self.values = np.asarray(values, dtype=float)
        self.times = list(times)
        self.station_ids = tuple(station_ids)

    @property
    def block_labels(self) -> np.ndarray:
        return np.array([t.year for t in self.times])


def read_panel_csv(path) -> RawPanel:
    path = str(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty file", path=path)
    header = [h.strip() for h in rows[0]]
    if [h.lower() for h in header] == ["station_id", "timestamp", "value"]:
        return _read_long(rows, path)
    if not header or header[0].lower() != "timestamp" or len(header) < 2:
        raise ParseError("header must be 'timestamp,<station>...' or "
                         "'station_id,timestamp,value'", 1, path)
    ids = header[1:]
    if len(set(ids)) != len(ids):
        raise ParseError("duplicate station columns", 1, path)
    times, vals = [], []
    for i, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", i, path)
        times.append(_parse_time(row[0], i, path))
        vals.append([_parse_value(c, i, path, ids[j]) for j, c in enumerate(row[1:])])
    _check_times(times, path)
    return RawPanel(np.array(vals).T.reshape(len(ids), len(times)), times, ids)


def _read_long(rows, path):
    data = {}
    stations = []
    for i, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 fields, got {len(row)}", i, path)
        sid = row[0].strip()
        t = _parse_time(row[1], i, path)
        if sid not in data:
            data[sid] = {}
            stations.append(sid)
        if t in data[sid]:
            raise ParseError(f"duplicate observation for {sid} at {row[1].strip()}", i, path)
        data[sid][t] = _parse_value(row[2], i, path, sid)
    times = sorted({t for d in data.values() for t in d})
    vals = np.full((len(stations), len(times)), np.nan)
    index = {t: j for j, t in enumerate(times)}
    for s, sid in enumerate(stations):
        for t, v in data[sid].items():
            vals[s, index[t]] = v
    return RawPanel(vals, times, stations)


def regular_grid(raw: RawPanel, path=None) -> RawPanel:
    """Fill missing time steps inside each year with NaN so lags are index offsets.

    The step is the smallest spacing of consecutive timestamps within a
    year; a timestamp off the step grid of its year raises ParseError.
    """
    years = raw.block_labels
    gaps = [b - a for a, b, ya, yb in zip(raw.times, raw.times[1:], years, years[1:])
            if ya == yb]
    if not gaps:
        return raw
    step = min(gaps)
    times, cols = [], []
    start = 0
    for j in range(1, len(raw.times) + 1):
        if j < len(raw.times) and years[j] == years[start]:
            continue
        t0 = raw.times[start]
        n = (raw.times[j - 1] - t0) // step + 1
        block = np.full((raw.values.shape[0], n), np.nan)
        for k in range(start, j):
            off, rem = divmod(raw.times[k] - t0, step)
            if rem:
                raise ParseError(f"timestamp {raw.times[k].isoformat()} is off the "
                                 f"{step} grid", path=path)
            block[:, off] = raw.values[:, k]
        times += [t0 + i * step for i in range(n)]
        cols.append(block)
        start = j
    return RawPanel(np.hstack(cols), times, raw.station_ids)


def _check_times(times, path):
    for a, b in zip(times, times[1:]):
        if b <= a:
            raise ParseError(f"timestamps not increasing at {b.isoformat()}", path=path)


def _fmt(v):
    return "" if not np.isfinite(v) else repr(float(v))


def panel_csv_text(values, times, station_ids) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["timestamp", *station_ids])
    values = np.asarray(values, dtype=float)
    for j, t in enumerate(times):
        w.writerow([t.strftime(TIME_FORMAT), *(_fmt(v) for v in values[:, j])])
    return buf.getvalue()


def write_panel_csv(path, values, times, station_ids):
    Path(path).write_text(panel_csv_text(values, times, station_ids), encoding="utf-8")


def synthetic_times(n_times: int, n_blocks: int = 1, start_year: int = 2001) -> list:
    """Hourly timestamps, one calendar year per block starting on June 21."""
    out = []
    for b in range(n_blocks):
        t0 = datetime(start_year + b, 6, 21)
        out += [t0 + timedelta(hours=h) for h in range(n_times)]
    return out


def read_stations(path) -> tuple:
    """Return (station_ids, coords) from a stations CSV."""
    path = str(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip().lower() for h in rows[0]] != ["station_id", "x_km", "y_km"]:
        raise ParseError("header must be 'station_id,x_km,y_km'", 1, path)
    ids, xy = [], []
    for i, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 fields, got {len(row)}", i, path)
        try:
            xy.append([float(row[1]), float(row[2])])
        except ValueError:
            raise ParseError("coordinates must be numbers", i, path) from None
        ids.append(row[0].strip())
    return tuple(ids), np.array(xy).reshape(-1, 2)


def write_stations(path, station_ids, coords):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["station_id", "x_km", "y_km"])
    for sid, (x, y) in zip(station_ids, np.asarray(coords)):
        w.writerow([sid, repr(float(x)), repr(float(y))])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def write_rows_csv(path, rows, columns):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in columns])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return _fmt(v)
    if isinstance(v, (tuple, list)):
        return " ".join(str(x) for x in v)
    return str(v)
