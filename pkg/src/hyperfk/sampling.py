"""Deterministic farming of sample blocks to a thread pool.

Samples are cut into fixed-size blocks of consecutive sample indices.  The
random numbers of a sample depend only on its index, and results are
reassembled in index order, so the output never depends on the number of
workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

#: samples per block; even so that antithetic pairs never straddle blocks
BLOCK_SIZE = 4096


def blocks(samples, block_size=BLOCK_SIZE):
    """Index ranges ``(start, stop)`` covering ``range(samples)``."""
    return [(s, min(s + block_size, samples)) for s in range(0, samples, block_size)]


def map_blocks(fn, samples, workers=1, block_size=BLOCK_SIZE):
    """Apply ``fn(indices)`` to every block and concatenate along axis 0."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    ranges = blocks(samples, block_size)

    def run(r):
        return fn(np.arange(r[0], r[1], dtype=np.uint64))

    if workers is None or workers <= 1 or len(ranges) == 1:
        parts = [run(r) for r in ranges]
    else:
        with ThreadPoolExecutor(max_workers=int(workers)) as pool:
            parts = list(pool.map(run, ranges))
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(cols, axis=0) for cols in zip(*parts))
    return np.concatenate(parts, axis=0)


def stable_mean(x):
    """Mean that is exact for constant arrays and independent of chunking."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("empty sample")
    x0 = float(x[0])
    return x0 + math.fsum((x - x0).tolist()) / x.size


def mean_and_error(x):
    """Sample mean and standard error (ddof=1) of a 1-d array."""
    x = np.asarray(x, dtype=float).ravel()
    m = stable_mean(x)
    if x.size < 2:
        return m, math.inf
    d = x - m
    var = math.fsum((d * d).tolist()) / (x.size - 1)
    return m, math.sqrt(var / x.size)
