"""Replica-parallel map with results independent of the thread count."""

from concurrent.futures import ThreadPoolExecutor

import numpy as np


def map_chunks(work, total, chunk=256, threads=1):
    """Run ``work(start, count)`` over consecutive replica blocks and concatenate.

    Each block draws from its own substreams (keyed by replica index), and the
    blocks are reassembled in order, so the output does not depend on
    ``threads``.  The compiled kernels release the GIL, so threads do help.
    """
    starts = list(range(0, total, chunk))
    jobs = [(s, min(chunk, total - s)) for s in starts]
    if threads <= 1 or len(jobs) <= 1:
        parts = [work(s, c) for s, c in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda sc: work(*sc), jobs))
    if not parts:
        return np.empty(0)
    return np.concatenate([np.atleast_1d(p) for p in parts], axis=0)
