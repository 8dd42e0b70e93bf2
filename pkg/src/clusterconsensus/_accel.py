"""Optional numba acceleration for the hot numeric kernels.

Set ``CLUSTERCONSENSUS_NO_NUMBA=1`` to force the pure-numpy code paths
(handy for debugging, or on platforms without an llvmlite wheel).
"""
import os

_disabled = os.environ.get("CLUSTERCONSENSUS_NO_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _disabled:
        raise ImportError
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        # bare @njit and @njit(cache=True) both become no-ops
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn


def backend() -> str:
    return "numba" if HAS_NUMBA else "numpy"
