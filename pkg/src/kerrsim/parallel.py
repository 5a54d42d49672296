"""Seed derivation and ordered fan-out.

Every random stream is ``SeedSequence(master_seed, spawn_key=key)`` where
``key`` is a tuple of small integers naming the stream (experiment, curve,
grid point, trajectory block).  Work is split into fixed-size blocks, so the
numbers drawn never depend on how many workers run them.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence

import numpy as np

BLOCK = 256

# Stream identifiers (first element of every spawn key).
S_DYNAMICS = 1
S_OFFSETS = 2
S_DETECTION = 3
S_BERNOULLI = 4
S_SPECTRO = 5
S_SYNTH = 6


def available_workers() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return max(1, os.cpu_count() or 1)


def rng_for(master_seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def blocks(n: int, size: int = BLOCK):
    """(index, start, stop) for consecutive blocks covering range(n)."""
    return [(b, s, min(s + size, n)) for b, s in enumerate(range(0, n, size))]


def run_ordered(fn: Callable, tasks: Sequence, jobs: int = 1) -> list:
    """Map ``fn`` over ``tasks`` and return results in task order."""
    tasks = list(tasks)
    if jobs is None or jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


def chunked(seq: Iterable, size: int):
    buf = []
    for item in seq:
        buf.append(item)
        if len(buf) == size:
            yield buf
            buf = []
    if buf:
        yield buf
