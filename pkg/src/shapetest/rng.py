"""Counter-based random streams.

A stream is identified by ``(seed, *keys)``; row ``s`` of the stream is drawn
from a Philox generator whose key is a hash of the identifier and whose
counter starts at ``s * 2**64``.  Rows never share counter values, and the
draw for a row does not depend on which worker produced it.
"""

from __future__ import annotations

import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional, Sequence

import numpy as np

CHUNK_ROWS = 1000


def _key(seed: int, keys: Sequence) -> np.ndarray:
    words = [int(seed) & 0xFFFFFFFF, (int(seed) >> 32) & 0xFFFFFFFF]
    for k in keys:
        if isinstance(k, str):
            words.append(zlib.crc32(k.encode()))
        else:
            words.append(int(k) & 0xFFFFFFFF)
    return np.random.SeedSequence(words).generate_state(2, np.uint64)


def row_generator(seed: int, row: int, *keys) -> np.random.Generator:
    counter = np.array([0, row, 0, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=_key(seed, keys), counter=counter))


def standard_normal_rows(seed: int, rows: range, n: int, *keys) -> np.ndarray:
    key = _key(seed, keys)
    out = np.empty((len(rows), n))
    for i, s in enumerate(rows):
        counter = np.array([0, s, 0, 0], dtype=np.uint64)
        out[i] = np.random.Generator(np.random.Philox(key=key, counter=counter)).standard_normal(n)
    return out


def worker_count(threads: Optional[int] = None) -> int:
    """Resolve a worker count; ``SHAPETEST_THREADS`` is the default (0 = one per CPU)."""
    if threads is None:
        threads = int(os.environ.get("SHAPETEST_THREADS", "0") or 0)
    if threads <= 0:
        threads = os.cpu_count() or 1
    return max(1, threads)


def map_chunks(func: Callable[[range], np.ndarray], total: int, threads: Optional[int] = None,
               chunk: int = CHUNK_ROWS) -> np.ndarray:
    """Apply ``func`` to fixed row chunks and stack the results in order.

    Chunk boundaries do not depend on the worker count, so the output is
    identical for any number of threads.
    """
    chunks = [range(a, min(a + chunk, total)) for a in range(0, total, chunk)]
    workers = min(worker_count(threads), len(chunks)) or 1
    if workers == 1:
        parts = [func(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(func, chunks))
    return np.concatenate(parts, axis=0)
