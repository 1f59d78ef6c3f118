"""Deterministic random-stream derivation.

Every parallelizable unit of work owns an independent generator derived
from integer coordinates, so results never depend on execution order:

    rng = stream_rng(seed, n, strategy_index, rep_index)

The rule is frozen: the entropy of the underlying SeedSequence is the
tuple of nonnegative coordinates itself.
"""

from __future__ import annotations

import numpy as np

__all__ = ["stream_rng"]


def stream_rng(*coords: int) -> np.random.Generator:
    entropy = [int(c) & 0xFFFFFFFFFFFFFFFF for c in coords]
    return np.random.default_rng(np.random.SeedSequence(entropy))
