"""Preprocessing pipeline for fitting real regression tables to a scenario.

Order of operations: select features by distinct-value count, standardize
them, Yeo-Johnson the target, rescale the target to the scenario's
prior-predictive moments, then (optionally) subsample rows.  Every fitted
quantity lands in a PreprocessRecord so the exact processed matrices can be
rebuilt from the raw table later.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import DataError, DomainError
from ..probmodels import ScenarioConfig, sample_dataset
from ..probmodels.scenarios import GLM
from ..rngs import derive_rng

# inverse golden ratio, the interval reduction factor per probe
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

LAMBDA_RANGE = (-5.0, 5.0)
LAMBDA_TOL = 1e-6
PRIOR_MOMENT_DRAWS = 100_000


# ---------------------------------------------------------------------------
# Yeo-Johnson power transform


def yeo_johnson_transform(y, lam: float) -> np.ndarray:
    """Apply the Yeo-Johnson transform with a fixed exponent.

    Branches: y >= 0 maps to ((y+1)^lam - 1)/lam (log1p(y) at lam = 0);
    y < 0 maps to -((1-y)^(2-lam) - 1)/(2-lam) (-log1p(-y) at lam = 2).
    Written with expm1/log1p so exponents near the removable singularities
    stay accurate.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 0:
        return yeo_johnson_transform(y[None], lam)[0]
    lam = float(lam)
    if not math.isfinite(lam):
        raise DomainError("lambda must be finite")
    if lam == 1.0:
        # both branches reduce to y exactly
        return y.copy()
    out = np.empty_like(y)
    pos = y >= 0
    if lam == 0.0:
        out[pos] = np.log1p(y[pos])
    else:
        out[pos] = np.expm1(lam * np.log1p(y[pos])) / lam
    neg = ~pos
    if lam == 2.0:
        out[neg] = -np.log1p(-y[neg])
    else:
        out[neg] = -np.expm1((2.0 - lam) * np.log1p(-y[neg])) / (2.0 - lam)
    return out


def yeo_johnson_llf(y, lam: float) -> float:
    """Profile Gaussian log-likelihood of the transformed data.

    Up to a constant: -n/2 log sigma_hat^2 + (lam-1) sum sign(y) log(|y|+1),
    the usual concentrated form with the Jacobian folded in.  Returns -inf
    when the transform degenerates (zero or non-finite variance).
    """
    y = np.asarray(y, dtype=np.float64)
    psi = yeo_johnson_transform(y, lam)
    var = float(np.var(psi))
    if not math.isfinite(var) or var <= 0.0:
        return -math.inf
    jac = float(np.sum(np.sign(y) * np.log1p(np.abs(y))))
    return -0.5 * y.size * math.log(var) + (lam - 1.0) * jac


def _golden_section_max(f, lo: float, hi: float, tol: float) -> float:
    a, b = float(lo), float(hi)
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        if f1 < f2:
            a = x1
            x1, f1 = x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = f(x2)
        else:
            b = x2
            x2, f2 = x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = f(x1)
    return 0.5 * (a + b)


def yeo_johnson(y) -> tuple[np.ndarray, float]:
    """Transform ``y`` with the maximum-likelihood exponent.

    The exponent maximizes the profile Gaussian log-likelihood over
    LAMBDA_RANGE by golden-section search to LAMBDA_TOL.  A constant input
    carries no shape information, so it passes through with lam = 1.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise DomainError("expected a 1-D target vector")
    if not np.all(np.isfinite(y)):
        raise DataError("target contains non-finite values")
    if y.size < 2 or float(np.var(y)) == 0.0:
        lam = 1.0
    else:
        lam = _golden_section_max(
            lambda t: yeo_johnson_llf(y, t), *LAMBDA_RANGE, tol=LAMBDA_TOL
        )
    return yeo_johnson_transform(y, lam), lam


# ---------------------------------------------------------------------------
# feature standardization and selection


@dataclass(frozen=True)
class Standardization:
    """Per-column affine map fitted by standardize()."""

    mean: np.ndarray
    std: np.ndarray
    kept: np.ndarray  # indices into the fitted matrix's columns

    def apply(self, matrix: np.ndarray) -> np.ndarray:
        return (np.asarray(matrix, dtype=np.float64)[:, self.kept] - self.mean) / self.std

    def invert(self, matrix: np.ndarray) -> np.ndarray:
        return np.asarray(matrix, dtype=np.float64) * self.std + self.mean


def standardize(matrix) -> tuple[np.ndarray, Standardization]:
    """Center and scale each column to zero mean, unit variance.

    Constant columns cannot be scaled; they are dropped and reported via the
    record's ``kept`` indices.  Raises DataError when nothing survives.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise DomainError("expected a 2-D matrix")
    if m.shape[0] < 2:
        raise DataError("need at least 2 rows to standardize")
    mean = m.mean(axis=0)
    std = m.std(axis=0)
    kept = np.flatnonzero(std > 1e-12 * np.maximum(1.0, np.abs(mean)))
    if kept.size == 0:
        raise DataError("every column is constant")
    rec = Standardization(mean=mean[kept], std=std[kept], kept=kept)
    return rec.apply(m), rec


def select_features(matrix, p: int) -> np.ndarray:
    """Indices of the p columns with the most distinct values.

    Ties go to the lower column index; the result is returned in ascending
    column order.
    """
    m = np.asarray(matrix)
    if m.ndim != 2:
        raise DomainError("expected a 2-D matrix")
    k = m.shape[1]
    if not 1 <= p <= k:
        raise DataError(f"cannot select {p} features from {k} columns")
    counts = np.array([np.unique(col).size for col in m.T])
    order = np.argsort(-counts, kind="stable")
    return np.sort(order[:p])


# ---------------------------------------------------------------------------
# prior-matched target scaling


_MOMENT_CACHE: dict = {}


def prior_target_moments(
    cfg: ScenarioConfig, *, n_draws: int = PRIOR_MOMENT_DRAWS, seed: int = 0
) -> tuple[float, float]:
    """Monte Carlo (mean, sd) of the response under the scenario's prior.

    Datasets are drawn from the generative model and their response values
    pooled until ``n_draws`` have accumulated.  Results are cached on the
    config contents, so repeated pipeline runs pay for the draw once.
    """
    if cfg.family != GLM:
        raise DataError("only GLM scenarios define a regression target")
    key = (repr(cfg), int(n_draws), int(seed))
    hit = _MOMENT_CACHE.get(key)
    if hit is not None:
        return hit
    rng = derive_rng(seed, "prior-target-moments")
    chunks = []
    total = 0
    while total < n_draws:
        dataset, _ = sample_dataset(cfg, rng)
        y = dataset.rows[:, -1]
        chunks.append(y)
        total += y.size
    pooled = np.concatenate(chunks)[:n_draws]
    moments = (float(pooled.mean()), float(pooled.std()))
    _MOMENT_CACHE[key] = moments
    return moments


@dataclass(frozen=True)
class TargetScaling:
    """Affine map y -> y * scale + shift."""

    scale: float
    shift: float

    def apply(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y, dtype=np.float64) * self.scale + self.shift


def scale_target_to_prior(
    y, cfg: ScenarioConfig, *, n_draws: int = PRIOR_MOMENT_DRAWS, seed: int = 0
) -> tuple[np.ndarray, TargetScaling]:
    """Affinely map y so its sample moments match the prior-predictive ones."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise DomainError("expected a 1-D target vector")
    sd = float(y.std())
    if sd <= 1e-12 * max(1.0, abs(float(y.mean()))):
        raise DataError("target has zero variance, cannot rescale")
    mean_p, sd_p = prior_target_moments(cfg, n_draws=n_draws, seed=seed)
    scale = sd_p / sd
    shift = mean_p - float(y.mean()) * scale
    rec = TargetScaling(scale=scale, shift=shift)
    return rec.apply(y), rec


# ---------------------------------------------------------------------------
# the full pipeline and its replayable record


@dataclass(frozen=True)
class PreprocessRecord:
    """Everything needed to replay a fitted pipeline on the raw table."""

    feature_indices: tuple  # raw column indices, in matrix order
    feature_mean: tuple
    feature_std: tuple
    yj_lambda: Optional[float]
    target_scale: float
    target_shift: float
    n_rows: Optional[int]  # subsample size, None keeps every row
    subsample_seed: int

    def __post_init__(self):
        if any(s <= 0.0 or not math.isfinite(s) for s in self.feature_std):
            raise DataError("feature stds must be positive and finite")
        if self.yj_lambda is not None and not math.isfinite(self.yj_lambda):
            raise DataError("Yeo-Johnson lambda must be finite")
        if len(self.feature_mean) != len(self.feature_indices) or len(
            self.feature_std
        ) != len(self.feature_indices):
            raise DataError("per-feature fields must have equal lengths")

    def to_json(self) -> str:
        return json.dumps(
            {
                "feature_indices": [int(i) for i in self.feature_indices],
                "feature_mean": list(self.feature_mean),
                "feature_std": list(self.feature_std),
                "yj_lambda": self.yj_lambda,
                "target_scale": self.target_scale,
                "target_shift": self.target_shift,
                "n_rows": self.n_rows,
                "subsample_seed": self.subsample_seed,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "PreprocessRecord":
        d = json.loads(text)
        return cls(
            feature_indices=tuple(int(i) for i in d["feature_indices"]),
            feature_mean=tuple(float(v) for v in d["feature_mean"]),
            feature_std=tuple(float(v) for v in d["feature_std"]),
            yj_lambda=None if d["yj_lambda"] is None else float(d["yj_lambda"]),
            target_scale=float(d["target_scale"]),
            target_shift=float(d["target_shift"]),
            n_rows=None if d["n_rows"] is None else int(d["n_rows"]),
            subsample_seed=int(d["subsample_seed"]),
        )


def _subsample_indices(n_total: int, n_rows: int, seed: int) -> np.ndarray:
    rng = derive_rng(seed, "dataprep-subsample")
    return rng.choice(n_total, size=n_rows, replace=False)


def preprocess(
    features,
    target,
    cfg: ScenarioConfig,
    *,
    n_rows: Optional[int] = None,
    seed: int = 0,
    n_prior_draws: int = PRIOR_MOMENT_DRAWS,
    prior_seed: int = 0,
) -> tuple[np.ndarray, np.ndarray, PreprocessRecord]:
    """Fit the full pipeline to a raw regression table.

    Returns the processed (features, target) pair plus the record that
    replays it.  The subsample (when requested) happens last, so the fitted
    statistics always come from the complete table.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.size:
        raise DataError("features must be (n, k) with a length-n target")
    if cfg.family != GLM:
        raise DataError("the preprocessing pipeline targets GLM scenarios")

    sel = select_features(X, cfg.p)
    X_std, srec = standardize(X[:, sel])
    if srec.kept.size < sel.size:
        dropped = sel[np.setdiff1d(np.arange(sel.size), srec.kept)]
        raise DataError(
            f"selected features {dropped.tolist()} are constant; "
            "provide a table with more informative columns"
        )
    final_idx = sel[srec.kept]

    y_psi, lam = yeo_johnson(y)
    y_out, trec = scale_target_to_prior(
        y_psi, cfg, n_draws=n_prior_draws, seed=prior_seed
    )

    if n_rows is not None:
        if not 1 <= n_rows <= y.size:
            raise DataError(f"cannot subsample {n_rows} of {y.size} rows")
        ridx = _subsample_indices(y.size, n_rows, seed)
        X_std = X_std[ridx]
        y_out = y_out[ridx]

    record = PreprocessRecord(
        feature_indices=tuple(int(i) for i in final_idx),
        feature_mean=tuple(float(v) for v in srec.mean),
        feature_std=tuple(float(v) for v in srec.std),
        yj_lambda=float(lam),
        target_scale=trec.scale,
        target_shift=trec.shift,
        n_rows=None if n_rows is None else int(n_rows),
        subsample_seed=int(seed),
    )
    return X_std, y_out, record


def apply_record(
    features, target, record: PreprocessRecord
) -> tuple[np.ndarray, np.ndarray]:
    """Replay a fitted pipeline; reproduces preprocess() output bitwise."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.size:
        raise DataError("features must be (n, k) with a length-n target")
    idx = np.asarray(record.feature_indices, dtype=np.intp)
    if idx.size and idx.max() >= X.shape[1]:
        raise DataError("record refers to columns the table does not have")
    mean = np.asarray(record.feature_mean)
    std = np.asarray(record.feature_std)
    X_out = (X[:, idx] - mean) / std
    y_psi = y if record.yj_lambda is None else yeo_johnson_transform(y, record.yj_lambda)
    y_out = y_psi * record.target_scale + record.target_shift
    if record.n_rows is not None:
        if record.n_rows > y.size:
            raise DataError("record subsamples more rows than the table has")
        ridx = _subsample_indices(y.size, record.n_rows, record.subsample_seed)
        X_out = X_out[ridx]
        y_out = y_out[ridx]
    return X_out, y_out
