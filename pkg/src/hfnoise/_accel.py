"""Backend switch for the compiled kernels.

Set ``HFNOISE_DISABLE_NUMBA=1`` before importing :mod:`hfnoise` to force the
pure-numpy code paths (useful for debugging and for platforms without numba).
"""

import os

_FLAG = "HFNOISE_DISABLE_NUMBA"


def _numba_requested():
    return os.environ.get(_FLAG, "").strip().lower() not in ("1", "true", "yes", "on")


try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and _numba_requested()


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise the identity decorator.

    The compiled versions are always built lazily, so importing this module
    costs nothing when the numpy backend is selected.
    """
    if HAS_NUMBA:
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)

    if args and callable(args[0]):
        return args[0]
    return lambda f: f


def backend():
    return "numba" if USE_NUMBA else "numpy"
