"""Seeded random-number streams.

Every source of randomness in a run derives from a single 64-bit seed
through named sub-streams, so that individual components (demo generation,
parameter init, flow-matching path noise, policy sampling, exploration,
epoch shuffling, validation) are reproducible in isolation and resuming a
run at an epoch boundary replays the exact same draws.
"""

from __future__ import annotations

import numpy as np

# Stable stream ids. Never reorder or reuse: checkpoint/resume equality and
# all recorded datasets depend on these values.
STREAMS = {
    "demo": 1,
    "init": 2,
    "path": 3,
    "sampler": 4,
    "explorer": 5,
    "shuffle": 6,
    "val": 7,
    "collect": 8,
    "eval": 9,
    "task": 10,
    "surrogate_init": 11,
    "surrogate_shuffle": 12,
}


def substream(seed: int, name: str, *counters: int) -> np.random.Generator:
    """Generator for the named sub-stream of ``seed``.

    Extra integer counters (collection iteration, epoch, ...) key
    per-phase streams so that a resumed run reconstructs them exactly.
    """
    if name not in STREAMS:
        raise KeyError(f"unknown rng stream {name!r}")
    entropy = (int(seed) & 0xFFFFFFFFFFFFFFFF, STREAMS[name]) + tuple(
        int(c) for c in counters
    )
    return np.random.default_rng(np.random.SeedSequence(entropy))
