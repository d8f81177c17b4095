"""Seeded, chunked Monte Carlo execution.

Rounds are split into fixed-size chunks. Chunk ``k`` of stream ``s`` under
master seed ``seed`` draws from ``Philox`` keyed by
``SeedSequence(seed, spawn_key=(s, k))``, so each chunk's random numbers are
fixed by its coordinates alone. Chunk results are integer count arrays that
are summed, making totals identical for any number of workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

CHUNK_SIZE = 1 << 16


def chunk_rng(seed: int, stream: int, chunk: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(chunk)))
    return np.random.Generator(np.random.Philox(ss))


def chunk_sizes(rounds: int, chunk_size: int = CHUNK_SIZE) -> list[int]:
    full, rest = divmod(int(rounds), chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


def run_chunked(
    fn: Callable[[int, np.random.Generator], np.ndarray],
    rounds: int,
    seed: int,
    stream: int = 0,
    workers: int = 1,
    chunk_size: int = CHUNK_SIZE,
) -> np.ndarray:
    """Sum ``fn(n, rng)`` over all chunks; ``fn`` must return an integer array."""
    sizes = chunk_sizes(rounds, chunk_size)

    def job(k: int) -> np.ndarray:
        return np.asarray(fn(sizes[k], chunk_rng(seed, stream, k)), dtype=np.int64)

    if workers <= 1 or len(sizes) <= 1:
        parts = [job(k) for k in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, range(len(sizes))))
    total = parts[0].copy()
    for p in parts[1:]:
        total += p
    return total


def sample_categorical(probs: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` indices from the distribution ``probs``."""
    cdf = np.cumsum(np.clip(np.asarray(probs, dtype=float), 0.0, None))
    cdf /= cdf[-1]
    return np.minimum(np.searchsorted(cdf, rng.random(n), side="right"), len(cdf) - 1)


def sample_rows(cdfs: np.ndarray, rows: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one index per entry of ``rows`` from the categorical row ``cdfs[rows]``."""
    u = rng.random(len(rows))
    c = cdfs[rows]
    return np.minimum((u[:, None] >= c).sum(axis=1), cdfs.shape[1] - 1)
