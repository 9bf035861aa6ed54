"""CSV reading and writing with round-trippable float formatting."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

import numpy as np

from .model import SampleSet


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return "nan" if math.isnan(v) else f"{v:.17g}"
    if isinstance(value, (tuple, list, np.ndarray)):
        return " ".join(fmt(v) for v in value)
    return str(getattr(value, "value", value))


def write_rows(path, rows, columns=None):
    """Write dict rows with a header; floats get 17 significant digits."""
    rows = list(rows)
    if columns is None:
        columns = []
        for r in rows:
            columns.extend(k for k in r if k not in columns)
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(r.get(c)) for c in columns])
    return path


def to_text(rows, columns=None) -> str:
    rows = list(rows)
    if columns is None:
        columns = list(rows[0]) if rows else []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def _table(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    try:
        [float(v) for v in rows[0]]
        return None, rows
    except ValueError:
        return [c.strip() for c in rows[0]], rows[1:]


def read_vector(path, column="x") -> np.ndarray:
    """Read a coefficient vector: a ``k,x`` table, an ``x`` column, or bare numbers."""
    header, rows = _table(path)
    if header is None:
        return np.array([float(v) for r in rows for v in r if v.strip()])
    return np.array([float(r[header.index(column)]) for r in rows])


def write_vector(path, x, column="x"):
    return write_rows(path, [{"k": k, column: float(v)} for k, v in enumerate(x)], ["k", column])


def read_samples(path) -> SampleSet:
    """Read an ``n,y[,z,w]`` table written by :func:`write_samples`."""
    header, rows = _table(path)
    if header is None:
        return SampleSet(y=np.array([float(r[-1]) for r in rows]))
    col = {c: header.index(c) for c in header}
    if "n" in col:
        rows = sorted(rows, key=lambda r: int(r[col["n"]]))
    get = lambda c: np.array([float(r[col[c]]) for r in rows]) if c in col else None
    return SampleSet(y=get("y"), z=get("z"), w=get("w"))


def sample_rows(samples: SampleSet):
    for n, y in enumerate(samples.y):
        row = {"n": n, "y": y}
        if samples.z is not None:
            row["z"] = samples.z[n]
        if samples.w is not None:
            row["w"] = samples.w[n]
        yield row


def sample_columns(samples: SampleSet):
    return ["n", "y"] + [c for c in ("z", "w") if getattr(samples, c) is not None]


def write_samples(path, samples: SampleSet):
    return write_rows(path, sample_rows(samples), sample_columns(samples))
