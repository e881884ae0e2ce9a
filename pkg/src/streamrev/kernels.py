"""Kernel selection: compiled extension when importable, numpy otherwise.

Set ``STREAMREV_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _pykernels
from .errors import InvalidArgument

BACKEND = "python"
_attend = _pykernels.attend_rows

if not os.environ.get("STREAMREV_PURE_PYTHON"):
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        BACKEND = "cython"
        _attend = _ckernels.attend_rows


def attend_rows(Q, K, V, lo, hi, n_heads, backend=None):
    """Multi-head attention for each query row ``r`` over keys ``lo[r]..hi[r]``.

    ``Q`` is ``(m, d)``, ``K`` and ``V`` are ``(T, d)`` with heads laid out as
    contiguous column blocks of width ``d // n_heads``.  Ranges are inclusive.
    """
    Q = np.ascontiguousarray(Q, dtype=np.float64)
    K = np.ascontiguousarray(K, dtype=np.float64)
    V = np.ascontiguousarray(V, dtype=np.float64)
    lo = np.ascontiguousarray(lo, dtype=np.int64)
    hi = np.ascontiguousarray(hi, dtype=np.int64)
    if Q.shape[0] and (np.any(hi < lo) or lo.min() < 0 or hi.max() >= K.shape[0]):
        raise InvalidArgument("empty or out-of-range key window")
    fn = _attend
    if backend == "python":
        fn = _pykernels.attend_rows
    elif backend == "cython":
        from . import _ckernels

        fn = _ckernels.attend_rows
    return fn(Q, K, V, lo, hi, int(n_heads))


def set_backend(name: str) -> str:
    """Switch the default kernel ("cython" or "python"); returns the previous one."""
    global BACKEND, _attend
    previous = BACKEND
    if name == "python":
        _attend = _pykernels.attend_rows
    elif name == "cython":
        from . import _ckernels

        _attend = _ckernels.attend_rows
    else:
        raise InvalidArgument(f"unknown backend {name!r}")
    BACKEND = name
    return previous
