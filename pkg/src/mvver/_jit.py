"""Numba switch.

Set ``MVVER_DISABLE_JIT=1`` before import to force the pure-numpy kernels.
When numba is not installed the numpy kernels are used regardless.
"""

import os

ENV_FLAG = "MVVER_DISABLE_JIT"

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba ships with the test env
    numba = None
    HAVE_NUMBA = False


def _env_disabled():
    return os.environ.get(ENV_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}


ENABLE_JIT = HAVE_NUMBA and not _env_disabled()


def njit(func):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True)(func)
