"""Deterministic random sub-streams.

Every random draw in the package comes from a generator keyed by
(root seed, *integer key path). Replicates are drawn in fixed-size blocks,
each with its own key, so results never depend on how work is split across
workers.
"""

from __future__ import annotations

import numpy as np

BLOCK = 250

# top-level key tags
BOOTSTRAP = 1
CAT = 2
STUDY = 3
SAMPLE = 4


def substream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *key: int) -> int:
    """A 63-bit integer seed for a child computation."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    hi, lo = ss.generate_state(2, dtype=np.uint32)
    return (int(hi) << 31) ^ int(lo)


def blocks(count: int, size: int = BLOCK):
    for b, start in enumerate(range(0, count, size)):
        yield b, start, min(start + size, count)
