"""Order-preserving process-pool map used by sweeps and ensembles."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")

WORKERS_ENV = "BELLFLOW_WORKERS"


def default_workers() -> int:
    """Worker count from ``BELLFLOW_WORKERS`` (1 when unset or invalid)."""
    try:
        n = int(os.environ.get(WORKERS_ENV, "1"))
    except ValueError:
        return 1
    return max(1, n)


def ordered_map(fn: Callable[[T], R], tasks: Sequence[T], workers: int | None = None) -> list[R]:
    """``[fn(t) for t in tasks]``, optionally on a process pool.

    Results are returned in task order whatever the worker count, so
    outputs do not depend on scheduling.  ``fn`` must be picklable.
    """
    workers = default_workers() if workers is None else int(workers)
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks))
