"""Input coercion shared by the two-sample metrics."""

from __future__ import annotations

import numpy as np


def as_sample_matrix(x) -> np.ndarray:
    """Coerce one sample set to shape (n, d).

    A 1-D array is n scalar draws, i.e. a column, never a single n-dim
    point; anything beyond 2-D is rejected by the caller's shape checks.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[:, None]
    return np.atleast_2d(x)
