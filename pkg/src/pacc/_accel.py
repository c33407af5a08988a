"""Numba dispatch switch.

Every hot kernel in the package is decorated with :func:`njit` from this
module. Setting the environment variable ``PACC_DISABLE_NUMBA=1`` before
import turns the decorator into the identity, so the same source runs as
plain Python/NumPy. Kernels consume pre-drawn random numbers, which keeps
both paths bit-identical.
"""

import os

_FLAG = os.environ.get("PACC_DISABLE_NUMBA", "0").strip().lower()

USE_NUMBA = _FLAG not in ("1", "true", "yes", "on")

if USE_NUMBA:
    try:
        import numba
    except ImportError:  # pragma: no cover
        USE_NUMBA = False

__all__ = ["USE_NUMBA", "njit"]


def njit(*args, **kwargs):
    """``numba.njit`` when enabled, otherwise a no-op decorator."""
    if len(args) == 1 and callable(args[0]) and not kwargs:
        func = args[0]
        return numba.njit(cache=True)(func) if USE_NUMBA else func

    def wrap(func):
        if not USE_NUMBA:
            return func
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)(func)

    return wrap
