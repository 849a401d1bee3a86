"""Kernel backend selection.

Hot loops are written twice: a numba ``@njit`` version and a vectorised numpy
version. ``AFFINEKG_BACKEND=numpy`` forces the numpy path; otherwise numba is
used whenever it imports.
"""

import os

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    NUMBA_AVAILABLE = False

ENV_FLAG = "AFFINEKG_BACKEND"
BACKENDS = ("numba", "numpy")


def default_backend() -> str:
    flag = os.environ.get(ENV_FLAG, "numba").strip().lower()
    if flag not in BACKENDS:
        raise ValueError(f"{ENV_FLAG} must be one of {BACKENDS}, got {flag!r}")
    if flag == "numba" and not NUMBA_AVAILABLE:
        return "numpy"
    return flag


def resolve(backend=None) -> str:
    if backend is None:
        return default_backend()
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not NUMBA_AVAILABLE:
        return "numpy"
    return backend


def njit(func):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise."""
    if NUMBA_AVAILABLE:
        return numba.njit(cache=True)(func)
    return func
