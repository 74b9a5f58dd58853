"""Per-trial random streams.

Every trial owns a Philox4x64 generator whose 128-bit key is
``(master_seed, trial_index)``. Philox is counter based, so the stream of
trial ``i`` depends only on the pair and never on how trials are batched
or distributed over workers.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def trial_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for trial ``index`` under ``seed``."""
    if index < 0:
        raise ValueError("trial index must be nonnegative")
    key = np.array([seed & _MASK64, index & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def uniform_open(rng: np.random.Generator, size=None):
    """Uniform variates strictly inside (0, 1)."""
    u = rng.random(size)
    # random() is on [0, 1); shift the exact zero off the boundary
    return np.where(u == 0.0, 2.0**-54, u) if size is not None else (u or 2.0**-54)
