"""JIT switch.

Kernels are compiled with numba unless ``SEEK_JIT=0`` is set or numba is not
importable, in which case the numpy implementations in :mod:`seeknav.kernels`
are used instead.
"""
import logging
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is optional
    numba = None

HAVE_NUMBA = numba is not None
USE_JIT = HAVE_NUMBA and os.environ.get("SEEK_JIT", "1").strip().lower() not in ("0", "false", "no", "off")

if HAVE_NUMBA:
    logging.getLogger("numba").setLevel(logging.WARNING)


def njit(func):
    """``numba.njit(cache=True)`` when numba is available, identity otherwise."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True)(func)
