"""Numba switch for the hot kernels.

Kernels are written in a scalar-loop style that numba compiles with ``njit``.
Setting ``BOHMTRAJ_NUMBA=0`` (or ``NUMBA_DISABLE_JIT=1``) runs the very same
functions as plain Python on numpy arrays, which is slow but dependency-free
and handy for debugging.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_FALSE = ("0", "false", "no", "off")



def _wanted():
    return (numba is not None
            and os.environ.get("BOHMTRAJ_NUMBA", "1").strip().lower() not in _FALSE
            and os.environ.get("NUMBA_DISABLE_JIT", "0").strip() in ("", "0"))


# fixed at import: kernels are decorated once
ENABLED = _wanted()


def jit(fn):
    """Compile ``fn`` in nopython mode when acceleration is enabled."""
    if not ENABLED:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


def backend():
    return "numba" if ENABLED else "python"
