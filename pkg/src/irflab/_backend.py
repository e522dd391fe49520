"""Kernel backend selection.

Hot loops are written once as plain Python over scalars and arrays. When
numba is importable and ``IRFLAB_BACKEND`` is not ``numpy`` they are compiled
with ``@njit``; otherwise callers get the vectorised numpy fallbacks defined
next to each kernel in :mod:`irflab._kernels`.
"""
import os

BACKEND_ENV = "IRFLAB_BACKEND"

_requested = os.environ.get(BACKEND_ENV, "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"{BACKEND_ENV} must be 'numba' or 'numpy', got {_requested!r}")

try:
    if _requested == "numpy":
        raise ImportError
    import numba  # noqa: F401
    from numba import njit as _njit

    USE_NUMBA = True
except ImportError:
    USE_NUMBA = False
    _njit = None

BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(fn):
    """Compile ``fn`` in nopython mode, or return ``None`` on the numpy backend."""
    if not USE_NUMBA:
        return None
    return _njit(cache=True, nogil=True)(fn)
