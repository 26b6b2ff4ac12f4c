"""CSV ingestion and emission.

Input tables are comma separated with a header.  Columns named ``x1..xd``
hold coordinates, ``r1..rp`` optional regressors and ``y`` the response.
Without regressor columns a constant column is added.
"""
from __future__ import annotations

import csv
import io
import re
from importlib import resources

import numpy as np

from .errors import ConfigError
from .model import Dataset

__all__ = ["read_table", "ingest_csv", "read_locations", "write_csv", "bundled_table1"]

_COORD = re.compile(r"^x(\d+)$")
_REG = re.compile(r"^r(\d+)$")


def _numbered(header, pattern, what, path):
    cols = {int(m.group(1)): i for i, h in enumerate(header) if (m := pattern.match(h))}
    if cols and sorted(cols) != list(range(1, len(cols) + 1)):
        raise ConfigError(f"{path}: {what} columns must be numbered 1..{len(cols)}")
    return [cols[k] for k in sorted(cols)]


def read_table(path):
    """Header and float rows of a CSV file; errors carry line and column."""
    try:
        with open(path, newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or not any(h.strip() for h in rows[0]):
        raise ConfigError(f"{path}: empty file or missing header")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise ConfigError(f"{path}: duplicate column names in header")
    data, lines = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ConfigError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
        vals = []
        for col, cell in zip(header, row):
            try:
                v = float(cell)
            except ValueError:
                raise ConfigError(f"{path}: line {lineno}, column {col!r}: "
                                  f"cannot parse {cell.strip()!r}") from None
            if not np.isfinite(v):
                raise ConfigError(f"{path}: line {lineno}, column {col!r}: non-finite value")
            vals.append(v)
        data.append(vals)
        lines.append(lineno)
    arr = np.array(data, dtype=float).reshape(len(data), len(header))
    return header, arr, lines


def _columns(header, path, need_y):
    xs = _numbered(header, _COORD, "coordinate", path)
    rs = _numbered(header, _REG, "regressor", path)
    if not xs:
        raise ConfigError(f"{path}: no coordinate columns (x1, x2, ...)")
    if need_y and "y" not in header:
        raise ConfigError(f"{path}: no response column 'y'")
    return xs, rs


def _check_duplicates(S, lines, path):
    _, first, inverse = np.unique(S, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    for i, k in enumerate(inverse):
        if first[k] != i:
            raise ConfigError(f"{path}: duplicate location at lines {lines[first[k]]} and {lines[i]}")


def ingest_csv(path):
    """Read a dataset; the constant regressor is added when no ``r`` columns exist."""
    header, arr, lines = read_table(path)
    xs, rs = _columns(header, path, need_y=True)
    if arr.shape[0] == 0:
        raise ConfigError(f"{path}: no data rows")
    S = arr[:, xs]
    _check_duplicates(S, lines, path)
    y = arr[:, header.index("y")]
    X = arr[:, rs] if rs else np.ones((len(y), 1))
    try:
        return Dataset(S, y, X)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def read_locations(path, d, p):
    """New locations (and regressors when ``p`` columns ``r1..rp`` are present)."""
    header, arr, _ = read_table(path)
    xs, rs = _columns(header, path, need_y=False)
    if len(xs) != d:
        raise ConfigError(f"{path}: expected {d} coordinate columns, found {len(xs)}")
    if rs and len(rs) != p:
        raise ConfigError(f"{path}: expected {p} regressor columns, found {len(rs)}")
    return arr[:, xs], (arr[:, rs] if rs else None)


def write_csv(fh, header, rows, fmt="{:.10g}"):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt.format(v) if isinstance(v, (float, np.floating)) else v for v in row])


def bundled_table1():
    """Path to the bundled 20-point one-dimensional example data set."""
    return resources.files("refgp").joinpath("data", "table1.csv")
