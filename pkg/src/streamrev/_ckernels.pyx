# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled multi-head attention over a cached key/value window."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt

cnp.import_array()


def attend_rows(const double[:, ::1] Q, const double[:, ::1] K, const double[:, ::1] V,
                const long long[::1] lo, const long long[::1] hi, int n_heads):
    cdef Py_ssize_t m = Q.shape[0]
    cdef Py_ssize_t d = Q.shape[1]
    cdef Py_ssize_t dk = d // n_heads
    cdef double scale = 1.0 / sqrt(<double>dk)
    out = np.zeros((m, d), dtype=np.float64)
    cdef double[:, ::1] O = out
    cdef Py_ssize_t width = 0
    cdef Py_ssize_t r
    for r in range(m):
        if hi[r] - lo[r] + 1 > width:
            width = hi[r] - lo[r] + 1
    scores_buf = np.empty(max(width, 1), dtype=np.float64)
    cdef double[::1] s = scores_buf
    cdef Py_ssize_t h, j, k, a, b, off
    cdef double acc, mx, tot, w
    for r in range(m):
        a = lo[r]
        b = hi[r]
        for h in range(n_heads):
            off = h * dk
            mx = -1e308
            for j in range(a, b + 1):
                acc = 0.0
                for k in range(dk):
                    acc += Q[r, off + k] * K[j, off + k]
                acc = acc * scale
                s[j - a] = acc
                if acc > mx:
                    mx = acc
            tot = 0.0
            for j in range(a, b + 1):
                w = exp(s[j - a] - mx)
                s[j - a] = w
                tot += w
            for j in range(a, b + 1):
                w = s[j - a] / tot
                for k in range(dk):
                    O[r, off + k] += w * V[j, off + k]
    return out
