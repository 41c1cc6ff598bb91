"""Worker-pool helpers and named, counter-based random streams.

All randomness in the package flows from one root seed through
``rng_stream(seed, *key)``; results are therefore independent of worker
count and of the order in which units are scheduled.
"""

from __future__ import annotations

import os
from typing import Callable, Iterable, Sequence

import numpy as np
from joblib import Parallel, delayed

# Stream namespaces, one per pipeline stage / study. Unit ids are appended
# after the namespace so streams never collide across stages.
STREAM_TEMPORAL = 1
STREAM_LOCAL = 2
STREAM_REGIONAL = 3
STREAM_ACTIVATION = 4
STREAM_PHANTOM = 5
STREAM_STUDY_FP = 6
STREAM_STUDY_KRIGE = 7
STREAM_STUDY_POWER = 8


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    """Generator for the (seed, key) stream, independent of call order."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def default_threads() -> int:
    return os.cpu_count() or 1


def pmap(fn: Callable, items: Sequence | Iterable, threads: int = 1) -> list:
    """Map ``fn`` over ``items`` on a worker pool, preserving input order.

    ``threads == 1`` runs inline. Results are merged in submission order, so
    the output is identical for any worker count provided ``fn`` is pure.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    return Parallel(n_jobs=min(threads, len(items)))(delayed(fn)(it) for it in items)
