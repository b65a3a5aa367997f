"""Maximum mean discrepancy between two samples.

Defaults follow the usual two-sample-test recipe: the unbiased U-statistic
estimator with an exponential kernel whose bandwidth is the median pairwise
distance of the pooled sample.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist, pdist

from ..errors import MetricError
from .samples import as_sample_matrix

KERNELS = ("exponential", "rbf")


def median_heuristic(a: np.ndarray, b: np.ndarray) -> float:
    """Median pairwise Euclidean distance of the pooled sample."""
    pooled = np.concatenate([as_sample_matrix(a), as_sample_matrix(b)], axis=0)
    med = float(np.median(pdist(pooled)))
    if med <= 0.0 or not np.isfinite(med):
        return 1.0
    return med


def _kernel(d: np.ndarray, kernel: str, bandwidth: float) -> np.ndarray:
    if kernel == "exponential":
        return np.exp(-d / bandwidth)
    if kernel == "rbf":
        return np.exp(-(d * d) / (2.0 * bandwidth * bandwidth))
    raise MetricError(f"kernel must be one of {KERNELS}")


def mmd2(a: np.ndarray, b: np.ndarray, *, kernel: str = "exponential",
         bandwidth: float = None, unbiased: bool = True) -> float:
    """Squared MMD estimate; the unbiased form can be negative near zero."""
    a = as_sample_matrix(a)
    b = as_sample_matrix(b)
    if a.shape[1] != b.shape[1]:
        raise MetricError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    m, n = a.shape[0], b.shape[0]
    if unbiased and (m < 2 or n < 2):
        raise MetricError("the unbiased estimator needs two points per sample")
    if bandwidth is None:
        bandwidth = median_heuristic(a, b)
    if bandwidth <= 0:
        raise MetricError("bandwidth must be > 0")

    kxx = _kernel(cdist(a, a), kernel, bandwidth)
    kyy = _kernel(cdist(b, b), kernel, bandwidth)
    kxy = _kernel(cdist(a, b), kernel, bandwidth)
    if unbiased:
        np.fill_diagonal(kxx, 0.0)
        np.fill_diagonal(kyy, 0.0)
        term_x = kxx.sum() / (m * (m - 1))
        term_y = kyy.sum() / (n * (n - 1))
    else:
        term_x = kxx.mean()
        term_y = kyy.mean()
    return float(term_x + term_y - 2.0 * kxy.mean())
