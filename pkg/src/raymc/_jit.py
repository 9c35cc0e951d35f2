"""Kernel compilation switch.

Hot kernels are decorated with :func:`kernel`.  When numba is importable and
``RAYMC_DISABLE_NUMBA`` is unset (or ``0``), kernels are compiled with
``numba.njit``.  Otherwise the very same functions run as plain Python over
numpy scalars and arrays.  That path is slow, runs the same operations in the
same order, and agrees with the compiled one up to last-ulp differences from
libm and fused multiply-adds.
"""

import functools
import os

import numpy as np

_disabled = os.environ.get("RAYMC_DISABLE_NUMBA", "").strip() not in ("", "0")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None

USE_NUMBA = numba is not None and not _disabled


def kernel(fn=None, *, inline=False):
    """Compile ``fn`` with numba, or keep it as Python in fallback mode.

    ``inline=True`` splices the body into compiled callers; use it for small
    helpers that take the big argument bundles, whose array members would
    otherwise be reference-counted on every call.
    """
    if fn is None:
        return functools.partial(kernel, inline=inline)
    if USE_NUMBA:
        return numba.njit(cache=True, nogil=True, error_model="numpy",
                          inline="always" if inline else "never")(fn)

    @functools.wraps(fn)
    def wrapper(*args):
        # uint64 scalar arithmetic wraps silently in compiled code; match that
        with np.errstate(over="ignore"):
            return fn(*args)

    return wrapper
