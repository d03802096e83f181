"""Data-parallel helpers.

Work over particle rows is always split into the same fixed-size blocks, and
each block is computed by the same code whatever the worker count, so output
is bitwise identical for any value of ``CBO_THREADS``.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

BLOCK_ROWS = 1024

_pools = {}


def worker_count():
    """Worker cap from ``CBO_THREADS`` (default: number of CPUs)."""
    raw = os.environ.get("CBO_THREADS", "").strip()
    if raw:
        try:
            value = int(raw)
        except ValueError:
            value = 0
        if value >= 1:
            return value
    return os.cpu_count() or 1


def for_each_block(fn, n_rows, workers=None):
    """Call ``fn(start, stop)`` on consecutive row blocks of size ``BLOCK_ROWS``."""
    bounds = [(s, min(s + BLOCK_ROWS, n_rows)) for s in range(0, n_rows, BLOCK_ROWS)]
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(bounds) <= 1:
        for s, e in bounds:
            fn(s, e)
        return
    pool = _pools.get(workers)
    if pool is None:
        pool = _pools[workers] = ThreadPoolExecutor(max_workers=workers)
    for fut in [pool.submit(fn, s, e) for s, e in bounds]:
        fut.result()
