"""Row-sharded thread pool helpers.

Work is split into fixed-size row blocks that do not depend on the thread
count, and every block writes only its own rows, so results are identical
for any ``threads`` value.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

BLOCK = 256


def default_threads() -> int:
    return os.cpu_count() or 1


def blocks(n: int, block: int = BLOCK) -> list[tuple[int, int]]:
    return [(i, min(n, i + block)) for i in range(0, n, block)]


def run_blocks(fn, n: int, threads: int | None = 1, block: int = BLOCK) -> list:
    """Call ``fn(r0, r1)`` for each row block; results come back in block order."""
    spans = blocks(n, block)
    threads = threads or default_threads()
    if threads <= 1 or len(spans) <= 1:
        return [fn(a, b) for a, b in spans]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda ab: fn(*ab), spans))
