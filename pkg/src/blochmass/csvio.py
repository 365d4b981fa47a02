"""CSV output shared by the engines and the command line.

Files start with ``#`` comment lines: ``# key = value`` pairs holding the
resolved scenario and run metadata, followed by a single header row and
numeric rows.  Numbers are written with 17 significant digits so they read
back bit-identical; missing values are written as ``nan``.  Nothing
time-dependent (dates, hostnames) is written, so repeated runs produce
identical bytes.
"""
from __future__ import annotations

import csv
import io
import math
from typing import Iterable, Mapping, Optional

import numpy as np

from .firstorder import TimeSeries

SERIES_COLUMNS = (
    "t_scaled",
    "t_SI",
    "a_scaled",
    "v_scaled",
    "v_over_vR",
    "a_baseline",
    "v_baseline",
    "mstar_over_m",
)


def fmt(x) -> str:
    """17 significant digits, ``nan``/``inf`` spelled plainly."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _meta_value(value) -> str:
    if isinstance(value, float):
        return fmt(value)
    if isinstance(value, (np.floating,)):
        return fmt(float(value))
    return str(value).replace("\n", " ")


def header_lines(meta: Mapping) -> list[str]:
    return [f"# {key} = {_meta_value(value)}" for key, value in meta.items()]


def write_table(path_or_buf, columns: Mapping[str, Iterable], meta: Optional[Mapping] = None) -> None:
    """Write equal-length ``columns`` with a ``#`` metadata block."""
    names = list(columns)
    data = [np.asarray(columns[n], dtype=float) for n in names]
    lengths = {d.size for d in data}
    if len(lengths) > 1:
        raise ValueError(f"columns have different lengths: {sorted(lengths)}")
    buf = io.StringIO()
    for line in header_lines(meta or {}):
        buf.write(line + "\n")
    buf.write(",".join(names) + "\n")
    for row in zip(*data):
        buf.write(",".join(fmt(x) for x in row) + "\n")
    text = buf.getvalue()
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w", newline="") as fh:
            fh.write(text)


def series_columns(ts: TimeSeries, time_unit: float) -> dict:
    """Column mapping of the series schema (populations appended as ``pop_n``)."""
    cols = {
        "t_scaled": ts.t,
        "t_SI": ts.t * time_unit,
        "a_scaled": ts.a,
        "v_scaled": ts.v,
        # Scaled velocity is already measured in recoil velocities; the
        # second column keeps the schema explicit for downstream readers.
        "v_over_vR": ts.v,
        "a_baseline": ts.a_baseline,
        "v_baseline": ts.v_baseline,
        "mstar_over_m": ts.mstar,
    }
    if ts.populations is not None:
        for band, row in zip(ts.bands, ts.populations):
            cols[f"pop_{band}"] = row
    return cols


def write_series(path, ts: TimeSeries, time_unit: float, meta: Optional[Mapping] = None) -> None:
    full = {"provenance": ts.provenance}
    full.update(meta or {})
    for key, value in ts.meta.items():
        full.setdefault(f"engine.{key}", value)
    write_table(path, series_columns(ts, time_unit), full)


def read_table(path) -> tuple[dict, dict]:
    """Return ``(meta, columns)``; meta values are strings."""
    meta: dict = {}
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            meta[key.strip()] = value.strip()
        elif line:
            body.append(line)
    if not body:
        raise ValueError(f"{path}: no header row")
    reader = csv.reader(body)
    names = next(reader)
    rows = [[float(x) for x in row] for row in reader]
    arr = np.array(rows, dtype=float).reshape(len(rows), len(names))
    return meta, {name: arr[:, i] for i, name in enumerate(names)}
