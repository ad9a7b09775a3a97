"""CSV matrices: header row, one observation per line, 17 significant digits."""
from __future__ import annotations

import csv
import math

import numpy as np

from .exceptions import ConfigError


def fmt(v: float) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    return format(v, ".17g")


def write_matrix(path, matrix, prefix: str = "x") -> None:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"{prefix}{k + 1}" for k in range(matrix.shape[1])])
        for row in matrix:
            w.writerow([fmt(v) for v in row])


def read_matrix(path) -> tuple[list[str], np.ndarray]:
    """Read a numeric CSV with a header row.  Errors name the offending line."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot open ({exc.strerror})") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise ConfigError(f"{path}: line 1: missing header row")
        rows = []
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ConfigError(
                    f"{path}: line {reader.line_num}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                vals = [float(c) for c in row]
            except ValueError:
                bad = next(c for c in row if not _is_float(c))
                raise ConfigError(f"{path}: line {reader.line_num}: not a number: {bad!r}") from None
            if not all(math.isfinite(v) for v in vals):
                raise ConfigError(f"{path}: line {reader.line_num}: non-finite value")
            rows.append(vals)
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    return [h.strip() for h in header], np.array(rows)


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True
