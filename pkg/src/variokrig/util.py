"""Small shared helpers: thread pool sizing, deterministic parallel map,
float formatting for text output."""

import os
from concurrent.futures import ThreadPoolExecutor

THREADS_ENV = "VARIOKRIG_THREADS"


def thread_count() -> int:
    """Worker count taken from the VARIOKRIG_THREADS environment variable.

    Defaults to 1; values below 1 are treated as 1.
    """
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def parallel_map(fn, items, n_threads=None):
    """Map ``fn`` over ``items`` preserving order.

    Every item is computed independently and the results are assembled by
    index, so the output is identical for any worker count.
    """
    items = list(items)
    if n_threads is None:
        n_threads = thread_count()
    if n_threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        return list(pool.map(fn, items))


def fmt_float(x) -> str:
    """Shortest round-trip decimal representation of a float."""
    return repr(float(x))


def fmt_float_point(x) -> str:
    """Float representation guaranteed to carry a decimal point.

    Used by the model-spec key/value serialization where a decimal point
    is mandatory.
    """
    s = repr(float(x))
    if "." in s:
        return s
    if "e" in s or "E" in s:
        mant, _, expo = s.partition("e")
        if "." not in mant:
            mant += ".0"
        return mant + "e" + expo
    if s.lstrip("+-").isdigit():
        return s + ".0"
    return s  # inf / nan
