"""CSV ingestion and emission.

Input tables have a header row and a first column of labels (dates);
every other cell must parse as a finite float. Output CSVs write floats
with ``repr`` so they read back bit-for-bit.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError

__all__ = ["ReturnsTable", "load_returns_csv", "write_returns_csv", "write_rows", "format_value"]


@dataclass(frozen=True)
class ReturnsTable:
    columns: tuple
    labels: tuple
    values: np.ndarray

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def d(self):
        return self.values.shape[1]

    def column(self, name):
        return self.values[:, self.columns.index(name)]


def load_returns_csv(path):
    """Read a labelled numeric table; errors name the 1-based line and column."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows if r]
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2:
        raise DataError(f"{path}: need a label column and at least one data column")
    if len(rows) == 1:
        raise DataError(f"{path}: no data rows")
    labels, values = [], []
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"{path}: line {line} has {len(row)} cells, expected {len(header)}")
        vals = []
        for col, cell in enumerate(row[1:], start=2):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}: line {line}, column {col}: non-numeric cell {cell!r}") from None
            if not math.isfinite(v):
                raise DataError(f"{path}: line {line}, column {col}: non-finite value {cell!r}")
            vals.append(v)
        labels.append(row[0])
        values.append(vals)
    return ReturnsTable(tuple(header[1:]), tuple(labels), np.array(values, dtype=float))


def format_value(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_rows(path, header, rows):
    """Write a rectangular CSV; ``rows`` are sequences aligned with ``header``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            if len(r) != len(header):
                raise ValueError("ragged output row")
            w.writerow([format_value(v) for v in r])


def write_returns_csv(path, X, columns=None, labels=None):
    X = np.asarray(X, dtype=float)
    columns = columns or [f"x{j}" for j in range(X.shape[1])]
    labels = labels or [f"t{i:05d}" for i in range(X.shape[0])]
    write_rows(path, ["date", *columns], [[lab, *row] for lab, row in zip(labels, X)])
