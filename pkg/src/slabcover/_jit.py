"""numba switch.

Set ``SLABCOVER_DISABLE_NUMBA=1`` to run every kernel through the numpy
fallback path (no compilation, handy for debugging and for cross-checks).
"""
import os

_FLAG = os.environ.get("SLABCOVER_DISABLE_NUMBA", "").strip().lower()
DISABLED = _FLAG not in ("", "0", "false", "no")

try:
    if DISABLED:
        raise ImportError
    import numba
    from numba import njit, prange  # noqa: F401

    if "NUMBA_THREADING_LAYER" not in os.environ:
        # the system TBB is too old for numba; skip probing it
        numba.config.THREADING_LAYER = "workqueue"
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAS_NUMBA = False
    prange = range

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


def set_threads(count):
    """Cap numba's worker pool; a no-op on the fallback path."""
    if not HAS_NUMBA or count is None:
        return
    import numba

    numba.set_num_threads(max(1, min(int(count), numba.config.NUMBA_NUM_THREADS)))
