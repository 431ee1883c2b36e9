"""Deterministic random substreams.

Every random quantity is drawn from a generator keyed by
``(master_seed, stream_tag, index)``.  Batches are cut into fixed-size chunks
with one substream each, so the output depends on the seed only, never on
how many workers filled the batch.
"""
from __future__ import annotations

import numpy as np

CHUNK = 1024

# stream tags
SCENARIO = 1
JOINT = 2
CHARACTERISTICS = 3
BRUTE_FORCE = 4
LIMIT = 5
COVERAGE = 6
PRIMITIVES = 7


def substream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def chunks(total: int, size: int = CHUNK):
    """Yield ``(chunk_index, start, stop)`` covering ``range(total)``."""
    for i, start in enumerate(range(0, total, size)):
        yield i, start, min(start + size, total)
