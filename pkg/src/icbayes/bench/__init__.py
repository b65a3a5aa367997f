"""CLI and experiment harness with reproducibility manifests."""

from .cli import build_parser, main
from .manifest import RunManifest, build_manifest, file_sha256
from .suite import (
    METHODS,
    SUITE_METRICS,
    WORKERS_ENV,
    SuiteConfig,
    default_hmc_chains,
    draw_posterior_samples,
    metric_value,
    project_to_common,
    run_suite,
    worker_count,
)

__all__ = [
    "build_parser",
    "main",
    "RunManifest",
    "build_manifest",
    "file_sha256",
    "METHODS",
    "SUITE_METRICS",
    "WORKERS_ENV",
    "SuiteConfig",
    "default_hmc_chains",
    "draw_posterior_samples",
    "metric_value",
    "project_to_common",
    "run_suite",
    "worker_count",
]
