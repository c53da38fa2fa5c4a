"""Optional numba acceleration.

Hot loops are written once as plain functions and compiled with numba unless
the environment variable TRIALEARN_DISABLE_NUMBA is set to a non-empty value
other than "0", in which case the same source runs as ordinary Python.
`maybe_jit` is applied at import time, so the flag must be set before the
first `import trialearn`.
"""

from __future__ import annotations

import os
from typing import Any, Callable

_DISABLE = os.environ.get("TRIALEARN_DISABLE_NUMBA", "0") not in ("", "0")


def numba_enabled() -> bool:
    """True when kernels are compiled with numba in this process."""
    return not _DISABLE


def maybe_jit(func: Callable[..., Any]) -> Callable[..., Any]:
    """Return an njit-compiled version of func, or func itself when disabled."""
    if _DISABLE:
        return func
    from numba import njit

    return njit(cache=False)(func)
