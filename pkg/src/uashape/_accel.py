"""Numba dispatch.

Kernels in :mod:`uashape.kernels` come in two flavours: an explicit-loop
version compiled with ``numba.njit`` and a vectorised numpy version. Set
``UASHAPE_DISABLE_NUMBA=1`` to force the numpy path (numba missing also
falls back silently).
"""

import os

_DISABLED = os.environ.get("UASHAPE_DISABLE_NUMBA", "0").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit as _njit

    NUMBA_AVAILABLE = True
except ImportError:
    _njit = None
    NUMBA_AVAILABLE = False

USE_NUMBA = NUMBA_AVAILABLE


def njit(fn):
    """Compile ``fn`` with numba or return it unchanged.

    ``error_model="numpy"`` drops the zero-division checks that otherwise
    block loop vectorisation; inputs never divide by zero on valid data.
    """
    if _njit is None:
        return fn
    return _njit(cache=True, error_model="numpy")(fn)


def select(numba_impl, numpy_impl):
    return numba_impl if USE_NUMBA else numpy_impl
