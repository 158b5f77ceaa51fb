"""Kernel backend selection and the row-partitioned thread pool.

The compiled backend is used when it imports; set
``INERTIAL_KURAMOTO_BACKEND=python`` to force the numpy fallback.
"""
import os
from concurrent.futures import ThreadPoolExecutor

from . import _kernels_py

_ENV = "INERTIAL_KURAMOTO_BACKEND"


def _load_compiled():
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels


_compiled = _load_compiled()

if os.environ.get(_ENV, "").strip().lower() == "python" or _compiled is None:
    kernels = _kernels_py
else:
    kernels = _compiled

BACKEND = kernels.NAME


def available_backends():
    names = ["python"]
    if _compiled is not None:
        names.insert(0, "cython")
    return names


def get_kernels(name=None):
    """Return the kernel module by name ("cython" / "python"), default active."""
    if name is None:
        return kernels
    if name == "python":
        return _kernels_py
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


_pools = {}


def _pool(threads):
    pool = _pools.get(threads)
    if pool is None:
        pool = ThreadPoolExecutor(max_workers=threads)
        _pools[threads] = pool
    return pool


def split(n, parts):
    """Contiguous [lo, hi) chunks covering range(n)."""
    parts = max(1, min(parts, n))
    bounds = [n * p // parts for p in range(parts + 1)]
    return [(bounds[p], bounds[p + 1]) for p in range(parts)]


def parallel_ranges(fn, n, threads):
    """Call fn(lo, hi) over a partition of range(n).

    Each kernel writes disjoint output entries computed by the same
    arithmetic regardless of the partition, so the result does not depend
    on the thread count.
    """
    threads = max(1, int(threads))
    if threads == 1 or n < 2:
        fn(0, n)
        return
    futures = [_pool(threads).submit(fn, lo, hi) for lo, hi in split(n, threads)]
    for fut in futures:
        fut.result()
