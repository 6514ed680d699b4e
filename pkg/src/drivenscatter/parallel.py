"""Process-pool fan-out with schedule-independent results."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Optional, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")

WORKERS_ENV = "DRIVENSCATTER_WORKERS"


def worker_count(requested: Optional[int] = None) -> int:
    """Resolve the number of workers.

    An explicit request wins, then the ``DRIVENSCATTER_WORKERS`` environment
    variable, then the number of usable CPUs.
    """
    if requested is not None:
        n = int(requested)
    elif os.environ.get(WORKERS_ENV):
        n = int(os.environ[WORKERS_ENV])
    else:
        try:
            n = len(os.sched_getaffinity(0))
        except AttributeError:
            n = os.cpu_count() or 1
    if n < 1:
        raise ValueError("worker count must be >= 1")
    return n


def parallel_map(func: Callable[[T], R], items: Iterable[T], workers: Optional[int] = None,
                 chunksize: Optional[int] = None) -> List[R]:
    """``[func(x) for x in items]`` evaluated on a process pool.

    The output order always follows ``items``, so results do not depend on
    how work was scheduled. ``func`` must be picklable (module level).
    """
    items = list(items)
    n = min(worker_count(workers), max(1, len(items)))
    if n == 1:
        return [func(x) for x in items]
    if chunksize is None:
        chunksize = max(1, len(items) // (8 * n))
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(func, items, chunksize=chunksize))


def sorted_by(results: Sequence[R], key: Callable[[R], float]) -> List[R]:
    """Stable sort used before any serialization."""
    return sorted(results, key=key)
