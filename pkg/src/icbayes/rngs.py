"""Deterministic RNG derivation.

Every stochastic routine in the package takes either an integer seed or a
``numpy.random.Generator``.  Streams for sub-tasks are derived with
:func:`derive_rng`, which hashes string tags into the seed material so that
(seed, tag path) pairs map to reproducible, independent generators on every
platform.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _tag_words(tag) -> list[int]:
    if isinstance(tag, (int, np.integer)):
        return [int(tag) & 0xFFFFFFFF, (int(tag) >> 32) & 0xFFFFFFFF]
    digest = hashlib.sha256(str(tag).encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


def derive_rng(seed: int, *tags) -> np.random.Generator:
    """Return a Generator keyed by ``seed`` and a path of string/int tags."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for tag in tags:
        entropy.extend(_tag_words(tag))
    return np.random.default_rng(np.random.SeedSequence(entropy))


def as_generator(seed_or_rng) -> np.random.Generator:
    """Accept either an int seed or an existing Generator."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return derive_rng(int(seed_or_rng))
