"""Empirical 2-Wasserstein distance.

One dimension gets the exact quantile-function form (any sample sizes); in
higher dimensions the optimal matching comes from the Hungarian algorithm on
the squared-distance matrix, with subsampling to keep the assignment
tractable.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from ..errors import MetricError
from ..rngs import derive_rng
from .samples import as_sample_matrix


def _w2_sorted_1d(a: np.ndarray, b: np.ndarray) -> float:
    """Exact W2 between 1-D empirical measures via quantile functions."""
    qa = np.sort(a)
    qb = np.sort(b)
    m, n = qa.size, qb.size
    edges = np.union1d(np.arange(1, m) / m, np.arange(1, n) / n)
    edges = np.concatenate([[0.0], edges, [1.0]])
    widths = np.diff(edges)
    mids = 0.5 * (edges[:-1] + edges[1:])
    ia = np.minimum((mids * m).astype(int), m - 1)
    ib = np.minimum((mids * n).astype(int), n - 1)
    return float(np.sqrt(np.sum(widths * (qa[ia] - qb[ib]) ** 2)))


def wasserstein2(a: np.ndarray, b: np.ndarray, *, max_points: int = 2000,
                 seed: int = 0) -> float:
    """W2 between the empirical distributions of two samples.

    Multivariate inputs larger than ``max_points`` (or of unequal sizes) are
    subsampled without replacement to a common size first; the 1-D path is
    exact at any size.
    """
    a = as_sample_matrix(a)
    b = as_sample_matrix(b)
    if a.shape[1] != b.shape[1]:
        raise MetricError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise MetricError("both samples must be non-empty")

    if a.shape[1] == 1:
        return _w2_sorted_1d(a[:, 0], b[:, 0])

    k = min(a.shape[0], b.shape[0], max_points)
    rng = derive_rng(seed, "w2-subsample")
    if a.shape[0] > k:
        a = a[rng.choice(a.shape[0], size=k, replace=False)]
    if b.shape[0] > k:
        b = b[rng.choice(b.shape[0], size=k, replace=False)]
    cost = cdist(a, b, metric="sqeuclidean")
    rows, cols = linear_sum_assignment(cost)
    return float(np.sqrt(np.mean(cost[rows, cols])))
