"""Select between numba-compiled kernels and the pure-numpy fallback.

Set ``DDA_DISABLE_NUMBA=1`` to force the numpy path (useful when numba is
unavailable or when comparing the two paths).
"""
import os
import warnings

_DISABLED = os.environ.get("DDA_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError("disabled by DDA_DISABLE_NUMBA")
    from numba import njit
    HAVE_NUMBA = True
except ImportError as exc:
    if not _DISABLED:
        warnings.warn(f"numba unavailable ({exc}); using numpy kernels")
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


USE_NUMBA = HAVE_NUMBA


def backend():
    return "numba" if USE_NUMBA else "numpy"
