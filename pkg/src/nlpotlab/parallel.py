"""Thread pool sized by the ``NLPOTLAB_THREADS`` environment variable."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def thread_count() -> int:
    raw = os.environ.get("NLPOTLAB_THREADS", "")
    try:
        value = int(raw)
    except ValueError:
        value = os.cpu_count() or 1
    return max(1, value)


def parallel_map(fn, items) -> list:
    """``[fn(x) for x in items]`` in input order, run on a bounded pool."""
    items = list(items)
    workers = min(thread_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
