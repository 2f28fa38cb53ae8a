"""Counter-based random streams.

Every stream is a Philox generator keyed by a master seed plus an optional
spawn path (e.g. a trial index), so the k-th draw of a stream depends only
on (seed, path, k) and never on scheduling.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def stream(seed: int, *path: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & _MASK64, spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def open_uniforms(gen: np.random.Generator, size: int) -> np.ndarray:
    """Uniform draws on the open interval (0, 1)."""
    u = gen.random(size)
    # random() is on [0, 1); zero would map to -inf through a quantile
    u[u == 0.0] = 2.0**-54
    return u
