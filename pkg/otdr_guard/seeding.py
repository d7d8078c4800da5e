"""Named random sub-streams derived from one run seed."""

from __future__ import annotations

import numpy as np

STREAMS = {
    "dataset": 1,
    "split": 2,
    "init": 3,
    "shuffle": 4,
}


def substream(seed: int, name: str, *keys: int) -> np.random.Generator:
    """Generator for stream ``name``; ``keys`` (e.g. a sequence index or epoch) pick a child stream."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), STREAMS[name], *map(int, keys)]))
