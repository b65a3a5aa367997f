"""Classifier two-sample test: stratified cross-validated ROC AUC.

An AUC near 0.5 means the classifier cannot tell the two samples apart.
Two classifier backends: random forests (scikit-learn) and a small numpy
MLP trained with Adam and early stopping.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata
from sklearn.ensemble import RandomForestClassifier

from ..errors import MetricError
from ..rngs import derive_rng
from .samples import as_sample_matrix

CLASSIFIERS = ("rf", "mlp")


def roc_auc(scores0: np.ndarray, scores1: np.ndarray) -> float:
    """Probability that a class-1 score outranks a class-0 score (ties half)."""
    scores0 = np.asarray(scores0, dtype=float).reshape(-1)
    scores1 = np.asarray(scores1, dtype=float).reshape(-1)
    if scores0.size == 0 or scores1.size == 0:
        raise MetricError("both score vectors must be non-empty")
    ranks = rankdata(np.concatenate([scores0, scores1]))
    n1 = scores1.size
    rank_sum = float(np.sum(ranks[scores0.size:]))
    return (rank_sum - n1 * (n1 + 1) / 2.0) / (scores0.size * n1)


class _MlpClassifier:
    """Two-hidden-layer ReLU net, binary cross-entropy, Adam, early stopping."""

    def __init__(self, dim: int, seed: int, width=None, learning_rate=1e-3,
                 max_epochs=100, patience=20, batch_size=128):
        self.width = max(10 * dim, 16) if width is None else width
        self.lr = learning_rate
        self.max_epochs = max_epochs
        self.patience = patience
        self.batch_size = batch_size
        rng = np.random.default_rng(seed)
        h = self.width
        self.rng = rng
        self.params = [
            rng.standard_normal((dim, h)) * np.sqrt(2.0 / dim),
            np.zeros(h),
            rng.standard_normal((h, h)) * np.sqrt(2.0 / h),
            np.zeros(h),
            rng.standard_normal((h, 1)) * np.sqrt(2.0 / h),
            np.zeros(1),
        ]
        self._m = [np.zeros_like(p) for p in self.params]
        self._v = [np.zeros_like(p) for p in self.params]
        self._t = 0

    def _logits(self, x):
        w1, b1, w2, b2, w3, b3 = self.params
        a1 = np.maximum(x @ w1 + b1, 0.0)
        a2 = np.maximum(a1 @ w2 + b2, 0.0)
        return (a2 @ w3 + b3)[:, 0], (a1, a2)

    def _grads(self, x, y):
        w1, b1, w2, b2, w3, b3 = self.params
        logits, (a1, a2) = self._logits(x)
        p = 1.0 / (1.0 + np.exp(-logits))
        dl = (p - y)[:, None] / x.shape[0]
        gw3 = a2.T @ dl
        gb3 = dl.sum(axis=0)
        da2 = dl @ w3.T
        da2[a2 <= 0.0] = 0.0
        gw2 = a1.T @ da2
        gb2 = da2.sum(axis=0)
        da1 = da2 @ w2.T
        da1[a1 <= 0.0] = 0.0
        gw1 = x.T @ da1
        gb1 = da1.sum(axis=0)
        return [gw1, gb1, gw2, gb2, gw3, gb3]

    def _adam(self, grads):
        self._t += 1
        for p, g, m, v in zip(self.params, grads, self._m, self._v):
            m *= 0.9
            m += 0.1 * g
            v *= 0.999
            v += 0.001 * g * g
            mhat = m / (1 - 0.9**self._t)
            vhat = v / (1 - 0.999**self._t)
            p -= self.lr * mhat / (np.sqrt(vhat) + 1e-8)

    def _val_loss(self, x, y):
        logits, _ = self._logits(x)
        return float(np.mean(np.maximum(logits, 0.0) - logits * y
                             + np.log1p(np.exp(-np.abs(logits)))))

    def fit(self, x, y):
        n = x.shape[0]
        order = self.rng.permutation(n)
        n_val = max(1, int(round(0.2 * n)))
        val_idx, tr_idx = order[:n_val], order[n_val:]
        xv, yv = x[val_idx], y[val_idx]
        xt, yt = x[tr_idx], y[tr_idx]
        best_loss = np.inf
        best_params = [p.copy() for p in self.params]
        stall = 0
        for _ in range(self.max_epochs):
            perm = self.rng.permutation(xt.shape[0])
            for start in range(0, xt.shape[0], self.batch_size):
                idx = perm[start : start + self.batch_size]
                self._adam(self._grads(xt[idx], yt[idx]))
            loss = self._val_loss(xv, yv)
            if loss < best_loss - 1e-6:
                best_loss = loss
                best_params = [p.copy() for p in self.params]
                stall = 0
            else:
                stall += 1
                if stall >= self.patience:
                    break
        self.params = best_params
        return self

    def scores(self, x):
        logits, _ = self._logits(x)
        return 1.0 / (1.0 + np.exp(-logits))


def _stratified_folds(n0: int, n1: int, n_folds: int, rng) -> list:
    """Index folds over the concatenated (class0, class1) array."""
    folds0 = np.array_split(rng.permutation(n0), n_folds)
    folds1 = np.array_split(rng.permutation(n1) + n0, n_folds)
    return [np.concatenate([f0, f1]) for f0, f1 in zip(folds0, folds1)]


def c2st_auc(a: np.ndarray, b: np.ndarray, *, classifier: str = "rf",
             n_folds: int = 10, seed: int = 0,
             return_folds: bool = False):
    """Cross-validated AUC for telling sample ``a`` (label 0) from ``b`` (label 1).

    Stratified folds keep the class balance identical in every split; the
    returned value is the mean held-out AUC over folds.
    """
    a = as_sample_matrix(a)
    b = as_sample_matrix(b)
    if a.shape[1] != b.shape[1]:
        raise MetricError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if classifier not in CLASSIFIERS:
        raise MetricError(f"classifier must be one of {CLASSIFIERS}")
    if min(a.shape[0], b.shape[0]) < n_folds:
        raise MetricError(
            f"need at least {n_folds} points per sample for {n_folds}-fold CV"
        )
    x = np.concatenate([a, b], axis=0)
    y = np.concatenate([np.zeros(a.shape[0]), np.ones(b.shape[0])])
    rng = derive_rng(seed, "c2st-folds")
    folds = _stratified_folds(a.shape[0], b.shape[0], n_folds, rng)

    aucs = []
    for i, test_idx in enumerate(folds):
        train_mask = np.ones(x.shape[0], dtype=bool)
        train_mask[test_idx] = False
        xt, yt = x[train_mask], y[train_mask]
        xe, ye = x[test_idx], y[test_idx]
        if classifier == "rf":
            clf = RandomForestClassifier(
                random_state=int(derive_rng(seed, "c2st-rf", i).integers(2**31))
            )
            clf.fit(xt, yt)
            scores = clf.predict_proba(xe)[:, 1]
        else:
            mlp_seed = int(derive_rng(seed, "c2st-mlp", i).integers(2**31))
            net = _MlpClassifier(x.shape[1], mlp_seed).fit(xt, yt)
            scores = net.scores(xe)
        aucs.append(roc_auc(scores[ye == 0], scores[ye == 1]))
    if return_folds:
        return float(np.mean(aucs)), np.asarray(aucs)
    return float(np.mean(aucs))
