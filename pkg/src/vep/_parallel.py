"""Optional thread parallelism for embarrassingly parallel sweeps.

The environment variable VEP_THREADS caps the worker count (default 1,
fully serial).  Results keep the input order, so parallel runs stay
deterministic.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("VEP_THREADS", "1")))
    except ValueError:
        return 1


def pmap(fn, items):
    items = list(items)
    k = worker_count()
    if k <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=k) as pool:
        return list(pool.map(fn, items))
