"""Chunked work distribution and per-item random streams."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

WORKERS_ENV = "MULTIBOHM_WORKERS"


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc
    return max(1, n)


def map_chunks(fn, items, chunk: int):
    """Apply fn to fixed-size consecutive blocks of items, results in block order.

    Block boundaries depend only on len(items) and chunk, never on the
    number of workers, so outputs are reproducible under any scheduling.
    """
    n = len(items)
    blocks = [items[i : i + chunk] for i in range(0, n, chunk)]
    workers = min(worker_count(), len(blocks))
    if workers <= 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, blocks))


def stream(seed: int, index: int) -> np.random.Generator:
    """Counter-based generator keyed by (master seed, item index)."""
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return np.random.Generator(np.random.Philox(key=[int(seed), int(index)]))
