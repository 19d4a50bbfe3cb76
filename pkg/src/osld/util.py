"""Small shared helpers."""

from __future__ import annotations

import os

import numpy as np


def worker_count() -> int:
    """Worker cap for parallel sections; OSLD_THREADS overrides cpu count."""
    raw = os.environ.get("OSLD_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            return 1
    return max(1, os.cpu_count() or 1)


def child_seed(seed: int, *key: int) -> int:
    """Deterministic derived seed for a subcomputation."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
