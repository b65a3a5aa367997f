"""Dormand-Prince integration and amortized posterior sampling."""

from .sampling import SampleSet, load_samples, sample_posterior, save_samples
from .solver import OdeResult, dopri5

__all__ = [
    "OdeResult",
    "SampleSet",
    "dopri5",
    "load_samples",
    "sample_posterior",
    "save_samples",
]
