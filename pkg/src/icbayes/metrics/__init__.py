"""Two-sample evaluation metrics and report aggregation."""

from .c2st import CLASSIFIERS, c2st_auc, roc_auc
from .mmd import KERNELS, median_heuristic, mmd2
from .report import (
    REPORT_COLUMNS,
    MetricSummary,
    ReportRow,
    config_hash,
    read_report,
    report_row,
    summarize,
    two_se_separated,
    write_report,
)
from .wasserstein import wasserstein2

__all__ = [
    "CLASSIFIERS",
    "KERNELS",
    "MetricSummary",
    "REPORT_COLUMNS",
    "ReportRow",
    "c2st_auc",
    "config_hash",
    "median_heuristic",
    "mmd2",
    "read_report",
    "report_row",
    "roc_auc",
    "summarize",
    "two_se_separated",
    "wasserstein2",
    "write_report",
]
