"""Numba switch for the hot kernels.

Set ``EGAP_DISABLE_NUMBA=1`` before import to run every kernel through its
pure Python/numpy path instead. Both paths are bit-identical; the numba one
is simply faster on long symbol streams.
"""

import logging
import os

import numpy as np

logger = logging.getLogger(__name__)

_FALSY = {"", "0", "false", "no", "off"}

NUMBA_ENABLED = os.environ.get("EGAP_DISABLE_NUMBA", "").strip().lower() in _FALSY

if NUMBA_ENABLED:
    try:
        import numba
    except ImportError:  # pragma: no cover - numba is a hard dependency
        logger.warning("numba not importable, falling back to interpreted kernels")
        NUMBA_ENABLED = False


def _as_python(args):
    return [a.tolist() if isinstance(a, np.ndarray) else a for a in args]


def interpreted(fn):
    """Wrap a kernel body so it runs in the interpreter on Python lists.

    Indexing Python lists with Python ints is several times faster than
    indexing numpy arrays element by element, and avoids fixed-width overflow.
    """

    def run(*args):
        return fn(*_as_python(args))

    run.__name__ = fn.__name__
    run.__doc__ = fn.__doc__
    run.py_func = fn
    return run


def kernel(fn):
    """Compile ``fn`` with numba when enabled, else return the interpreted path."""
    if NUMBA_ENABLED:
        return numba.njit(cache=True, nogil=True)(fn)
    return interpreted(fn)
