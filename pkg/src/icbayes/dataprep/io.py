"""CSV ingestion for real-world regression tables.

Values must be numeric; rows containing missing markers are dropped and
counted rather than imputed.  Anything else unparseable is a hard error
that names the offending line.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from ..errors import DataError

# lower-cased cell contents treated as missing values
_MISSING = frozenset({"", "na", "n/a", "nan", "null", "none"})


@dataclass(frozen=True)
class RawTable:
    """Dense numeric table: row-major matrix plus column names."""

    matrix: np.ndarray
    columns: tuple[str, ...]
    n_dropped: int

    def __post_init__(self):
        if self.matrix.ndim != 2 or self.matrix.shape[1] != len(self.columns):
            raise DataError("matrix shape does not match the column names")

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise DataError(f"no column named {name!r}")
        return self.matrix[:, self.columns.index(name)]


def load_csv(path, *, columns=None) -> RawTable:
    """Read a headered CSV into a float64 matrix.

    ``columns`` optionally restricts (and orders) the columns to keep.
    Rows with missing values are dropped; their count is reported on the
    returned table.  A cell that is neither numeric nor a missing marker
    raises DataError with the 1-based line number.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row") from None
        if columns is not None:
            absent = [c for c in columns if c not in header]
            if absent:
                raise DataError(f"{path}: columns not found: {absent}")
            take = [header.index(c) for c in columns]
            names = tuple(columns)
        else:
            take = list(range(len(header)))
            names = tuple(header)

        kept_rows = []
        dropped = 0
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            vals = np.empty(len(take))
            complete = True
            for j, col in enumerate(take):
                cell = row[col].strip()
                if cell.lower() in _MISSING:
                    complete = False
                    break
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}:{lineno}: cannot parse {row[col]!r} as a number"
                    ) from None
                if math.isnan(v):
                    complete = False
                    break
                vals[j] = v
            if complete:
                kept_rows.append(vals)
            else:
                dropped += 1

    if kept_rows:
        matrix = np.stack(kept_rows)
    else:
        matrix = np.empty((0, len(take)))
    return RawTable(matrix=matrix, columns=names, n_dropped=dropped)


def write_csv(path, matrix, columns) -> None:
    """Write a numeric matrix with a header row.

    Floats are serialised with repr, which round-trips exactly through
    load_csv.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise DataError("expected a 2-D matrix")
    if matrix.shape[1] != len(columns):
        raise DataError(
            f"matrix has {matrix.shape[1]} columns but {len(columns)} names given"
        )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(columns))
        for row in matrix:
            writer.writerow([repr(float(x)) for x in row])
