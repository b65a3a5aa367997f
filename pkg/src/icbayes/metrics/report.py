"""Aggregation of per-dataset metric values and the benchmark report format."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from ..errors import MetricError

REPORT_COLUMNS = ("scenario", "method", "metric", "value", "se", "n", "config_hash")


@dataclass
class MetricSummary:
    metric: str
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.values.size == 0:
            raise MetricError("cannot summarize zero values")

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def se(self) -> float:
        if self.n < 2:
            return math.nan
        return float(np.std(self.values, ddof=1) / math.sqrt(self.n))


def summarize(metric: str, values) -> MetricSummary:
    return MetricSummary(metric=metric, values=values)


def two_se_separated(x: MetricSummary, y: MetricSummary) -> bool:
    """Whether the two means differ by more than twice the combined SE."""
    if math.isnan(x.se) or math.isnan(y.se):
        return False
    return abs(x.mean - y.mean) > 2.0 * math.sqrt(x.se**2 + y.se**2)


def config_hash(obj) -> str:
    """Short stable digest of any JSON-serializable configuration."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class ReportRow:
    scenario: str
    method: str
    metric: str
    value: float
    se: float
    n: int
    config_hash: str


def report_row(scenario: str, method: str, summary: MetricSummary,
               cfg_hash: str) -> ReportRow:
    return ReportRow(
        scenario=scenario,
        method=method,
        metric=summary.metric,
        value=summary.mean,
        se=summary.se,
        n=summary.n,
        config_hash=cfg_hash,
    )


def write_report(path, rows: Iterable[ReportRow], *, append: bool = False) -> None:
    """Write (or, with ``append``, extend) a report CSV.

    Appending to a file that does not exist yet writes the header first, so
    incremental runs can share one growing report.
    """
    fresh = not (append and os.path.exists(path))
    with open(path, "a" if append else "w", newline="") as fh:
        writer = csv.writer(fh)
        if fresh:
            writer.writerow(REPORT_COLUMNS)
        for row in rows:
            writer.writerow([
                row.scenario, row.method, row.metric,
                repr(float(row.value)), repr(float(row.se)), row.n,
                row.config_hash,
            ])


def read_report(path) -> list:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != REPORT_COLUMNS:
            raise MetricError(f"unexpected report columns {header}")
        for rec in reader:
            rows.append(ReportRow(
                scenario=rec[0], method=rec[1], metric=rec[2],
                value=float(rec[3]), se=float(rec[4]), n=int(rec[5]),
                config_hash=rec[6],
            ))
    return rows
