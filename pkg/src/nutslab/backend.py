"""Numba/numpy backend selection for the hot integrator kernels.

The compiled path is the default whenever numba imports cleanly.  Setting
``NUTSLAB_BACKEND=numpy`` forces the pure-numpy fallback everywhere (useful
for debugging and for the backend benchmark); ``NUTSLAB_BACKEND=numba``
insists on the compiled path and raises if numba is unavailable.
"""
from __future__ import annotations

import os

_ENV_VAR = "NUTSLAB_BACKEND"

try:
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _njit = None
    _HAVE_NUMBA = False


def _requested() -> str:
    return os.environ.get(_ENV_VAR, "").strip().lower()


def use_numba() -> bool:
    """True when the compiled kernels should be used."""
    req = _requested()
    if req == "numpy":
        return False
    if req == "numba":
        if not _HAVE_NUMBA:
            raise RuntimeError(
                f"{_ENV_VAR}=numba requested but numba is not importable"
            )
        return True
    return _HAVE_NUMBA


def backend_name() -> str:
    return "numba" if use_numba() else "numpy"


def jit_kernel(func):
    """Compile ``func`` with numba when available, else return it unchanged.

    The decision is taken at import time; the fallback implementations live
    next to their compiled twins in :mod:`nutslab.kernels`.
    """
    if _HAVE_NUMBA:
        return _njit(cache=True)(func)
    return func
