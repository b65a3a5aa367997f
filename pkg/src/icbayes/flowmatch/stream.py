"""Streaming example source: every example is a pure function of
(seed, split, index), so training never materializes a dataset on disk and a
resumed run sees exactly the byte-identical stream.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError
from ..probmodels import ScenarioConfig, sample_dataset
from ..rngs import derive_rng

SPLITS = ("train", "val", "test")


def make_example(cfg: ScenarioConfig, seed: int, split: str, index: int):
    """Draw example ``index`` of ``split``: (rows (K, row_dim), latent (d,))."""
    if split not in SPLITS:
        raise ConfigurationError(f"split must be one of {SPLITS}, got {split!r}")
    rng = derive_rng(seed, "example", split, int(index))
    dataset, latent = sample_dataset(cfg, rng)
    return dataset.rows, latent.values


def make_batch(cfg: ScenarioConfig, seed: int, split: str, start: int, size: int):
    """Stack ``size`` consecutive examples into (rows, latents) arrays."""
    rows = np.empty((size, cfg.K, cfg.row_dim))
    latents = np.empty((size, cfg.latent_layout().dim))
    for i in range(size):
        rows[i], latents[i] = make_example(cfg, seed, split, start + i)
    return rows, latents
