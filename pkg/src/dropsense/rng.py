"""Counter-based random streams keyed by (master seed, purpose, index).

Every random quantity in the package is drawn from a Philox generator whose
key is derived from the master seed plus a fixed purpose tag and an index
(chunk number, particle number, titration point). Results therefore do not
depend on evaluation order or on how work is partitioned.
"""
from __future__ import annotations

import numpy as np

NOISE = 1
JITTER = 2
LOADING = 3
BROWNIAN = 4
PARTICLE = 5
TITRATION = 6

# Samples per noise chunk. Part of the stream layout: changing it changes traces.
CHUNK = 1 << 20


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def particle_stream(seed: int, index: int) -> np.random.Generator:
    return stream(seed, PARTICLE, index)


def derive_seed(seed: int, *key: int) -> int:
    """A child master seed (u64) for an independent sub-run."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
