"""Counter-based random streams.

Every sampling routine takes an explicit ``numpy.random.Generator``. Streams
are Philox generators keyed by a root seed plus an integer path, so trial
``i`` of a run always sees the same bits no matter how trials are chunked
across workers.
"""
from __future__ import annotations

import os

import numpy as np

SEED_ENV = "QFUBQC_SEED"


def stream(seed: int, *path: int) -> np.random.Generator:
    """Independent generator for ``(seed, *path)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def split(rng: np.random.Generator, k: int) -> list[np.random.Generator]:
    return list(rng.spawn(k))


def default_seed(fallback: int = 0) -> int:
    raw = os.environ.get(SEED_ENV)
    return int(raw) if raw not in (None, "") else fallback


def bit(rng: np.random.Generator) -> int:
    return int(rng.integers(2))


def bits(rng: np.random.Generator, n: int) -> int:
    """Uniform ``n``-bit integer (arbitrary ``n``)."""
    out = 0
    while n > 0:
        take = min(n, 62)
        out = (out << take) | int(rng.integers(1 << take))
        n -= take
    return out
