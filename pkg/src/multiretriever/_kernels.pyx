# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. Must stay semantically identical to ``_kernels_py``."""

from libc.math cimport sqrt
from libc.stdlib cimport free, malloc

import numpy as np

cimport numpy as cnp

cnp.import_array()


def levenshtein(str a, str b):
    """Unit-cost edit distance over code points (two-row dynamic program)."""
    cdef Py_ssize_t n = len(a), m = len(b), i, j
    cdef Py_ssize_t *prev
    cdef Py_ssize_t *cur
    cdef Py_ssize_t *tmp
    cdef Py_ssize_t best, cand
    cdef Py_UCS4 ca
    if n < m:
        a, b = b, a
        n, m = m, n
    if m == 0:
        return n
    prev = <Py_ssize_t *> malloc((m + 1) * sizeof(Py_ssize_t))
    cur = <Py_ssize_t *> malloc((m + 1) * sizeof(Py_ssize_t))
    if prev == NULL or cur == NULL:
        free(prev)
        free(cur)
        raise MemoryError()
    try:
        for j in range(m + 1):
            prev[j] = j
        for i in range(1, n + 1):
            ca = a[i - 1]
            cur[0] = i
            for j in range(1, m + 1):
                best = prev[j - 1] + (0 if ca == b[j - 1] else 1)
                cand = prev[j] + 1
                if cand < best:
                    best = cand
                cand = cur[j - 1] + 1
                if cand < best:
                    best = cand
                cur[j] = best
            tmp = prev
            prev = cur
            cur = tmp
        return prev[m]
    finally:
        free(prev)
        free(cur)


def cosine_scores(const float[:, ::1] rows, const double[::1] query):
    """Cosine of every row against ``query``; zero-norm rows or query give 0."""
    cdef Py_ssize_t n = rows.shape[0], d = rows.shape[1], i, k
    if query.shape[0] != d:
        raise ValueError("query length does not match row width")
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] res = out
    cdef double qn = 0.0, dot, rn, v
    for k in range(d):
        qn += query[k] * query[k]
    qn = sqrt(qn)
    if qn == 0.0:
        return out
    with nogil:
        for i in range(n):
            dot = 0.0
            rn = 0.0
            for k in range(d):
                v = rows[i, k]
                dot += v * query[k]
                rn += v * v
            if rn > 0.0:
                res[i] = dot / (sqrt(rn) * qn)
    return out
