"""Numba switch for the hot kernels.

Set ``TETHERPERTURB_DISABLE_NUMBA=1`` to run every kernel as plain Python /
NumPy.  The flag is read once, at import time.
"""
from __future__ import annotations

import functools
import os

_FLAG = os.environ.get("TETHERPERTURB_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _FLAG not in ("", "0", "false", "no")

try:
    from numba import njit as _njit

    NUMBA_OK = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_OK = False
    _njit = None

USE_NUMBA = NUMBA_OK and not _DISABLED


def jit(func):
    """Compile ``func`` with ``numba.njit`` when acceleration is enabled.

    The original Python function stays reachable as ``func.py_func`` in both
    modes, so tests can compare the two paths directly.
    """
    if USE_NUMBA:
        return _njit(cache=True)(func)

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        return func(*args, **kwargs)

    wrapper.py_func = func
    return wrapper


__all__ = ["jit", "NUMBA_OK", "USE_NUMBA"]
