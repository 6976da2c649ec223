"""Seeded random streams shared by samplers and augmentation.

Every stochastic component takes an explicit ``numpy.random.Generator``.
Same seed plus same call sequence gives identical draws; independent
substreams keep parallel episode generation reproducible.
"""

from __future__ import annotations

import numpy as np


def new_rng(seed: int) -> np.random.Generator:
    """Root random stream for a run."""
    return np.random.default_rng(seed)


def derive_rng(seed: int, *context) -> np.random.Generator:
    """Stream keyed on (seed, context...); stable across call order.

    Context entries are hashed into the seed sequence, so e.g.
    ``derive_rng(7, "valbank")`` and ``derive_rng(7, "train")`` are
    independent regardless of which is created first.
    """
    key = [int(seed)] + [_to_int(c) for c in context]
    return np.random.default_rng(np.random.SeedSequence(key))


def split_rng(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """n independent child streams; advances the parent deterministically."""
    if n < 1:
        raise ValueError(f"need at least one substream, got {n}")
    return rng.spawn(n)


def _to_int(value) -> int:
    if isinstance(value, (int, np.integer)):
        return int(value)
    # strings hash into a stable 63-bit key via their bytes
    data = str(value).encode()
    acc = 0
    for b in data:
        acc = (acc * 131 + b) % (2**63 - 1)
    return acc
