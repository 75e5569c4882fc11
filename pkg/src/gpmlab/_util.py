import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def loglog_fit(n, values):
    """Least-squares slope of log(values) against log(n).

    Returns (slope, intercept, rms residual); nonpositive values are dropped.
    """
    n = np.asarray(n, dtype=float)
    v = np.asarray(values, dtype=float)
    ok = (v > 0) & (n > 0)
    if ok.sum() < 2:
        return float("nan"), float("nan"), float("nan")
    x, y = np.log(n[ok]), np.log(v[ok])
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    return float(slope), float(icpt), float(np.sqrt(np.mean(resid ** 2)))


def replica_rng(seed, r):
    """Independent stream for replica ``r`` of an experiment seeded with ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(r,))))


def default_threads():
    return os.cpu_count() or 1


def ordered_map(fn, items, threads=None):
    """``[fn(x) for x in items]`` evaluated on a thread pool, results in input order."""
    items = list(items)
    threads = threads or default_threads()
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def chunks(n, size):
    return [(i, min(n, i + size)) for i in range(0, n, size)]
