"""Real-world table ingestion and the prior-matched preprocessing pipeline."""

from .io import RawTable, load_csv, write_csv
from .pipeline import (
    LAMBDA_RANGE,
    LAMBDA_TOL,
    PRIOR_MOMENT_DRAWS,
    PreprocessRecord,
    Standardization,
    TargetScaling,
    apply_record,
    preprocess,
    prior_target_moments,
    scale_target_to_prior,
    select_features,
    standardize,
    yeo_johnson,
    yeo_johnson_llf,
    yeo_johnson_transform,
)

__all__ = [
    "RawTable",
    "load_csv",
    "write_csv",
    "LAMBDA_RANGE",
    "LAMBDA_TOL",
    "PRIOR_MOMENT_DRAWS",
    "PreprocessRecord",
    "Standardization",
    "TargetScaling",
    "apply_record",
    "preprocess",
    "prior_target_moments",
    "scale_target_to_prior",
    "select_features",
    "standardize",
    "yeo_johnson",
    "yeo_johnson_llf",
    "yeo_johnson_transform",
]
