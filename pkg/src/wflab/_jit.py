"""Optional numba acceleration.

Set ``WFLAB_DISABLE_NUMBA=1`` in the environment to force the pure-numpy
code paths even when numba is installed.
"""

import os

_DISABLED = os.environ.get("WFLAB_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _DISABLED:
        raise ImportError
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on the environment
    _njit = None
    HAVE_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise an identity decorator."""
    if HAVE_NUMBA:
        return _njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(func):
        return func

    return wrap


def use_numba() -> bool:
    """Whether accelerated kernels are the active implementation."""
    return HAVE_NUMBA
