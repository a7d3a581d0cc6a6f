# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: ragged mean pooling, its adjoint, and top-k selection.

Semantics mirror ``_kernels_py`` exactly; summation order is sequential over
positions so both backends agree to the last bit on the pooling kernels.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef enum:
    C_NONE = 0
    C_SINGLE = 1
    C_PER_TOKEN = 2

MODE_NONE = C_NONE
MODE_SINGLE = C_SINGLE
MODE_PER_TOKEN = C_PER_TOKEN


def pool_mean(const double[:, ::1] table, const cnp.int64_t[::1] ids,
              const cnp.int64_t[::1] offsets, delta, int mode):
    cdef Py_ssize_t n_ex = offsets.shape[0] - 1
    cdef Py_ssize_t d = table.shape[1]
    cdef Py_ssize_t b, j, c, tok
    cdef double m
    cdef const double[::1] dsingle
    cdef const double[:, ::1] dtable
    out = np.zeros((n_ex, d), dtype=np.float64)
    cdef double[:, ::1] res = out
    if mode == C_SINGLE:
        dsingle = np.ascontiguousarray(delta, dtype=np.float64)
    elif mode == C_PER_TOKEN:
        dtable = np.ascontiguousarray(delta, dtype=np.float64)
    with nogil:
        for b in range(n_ex):
            for j in range(offsets[b], offsets[b + 1]):
                tok = ids[j]
                if mode == C_SINGLE:
                    for c in range(d):
                        res[b, c] += table[tok, c] + dsingle[c]
                elif mode == C_PER_TOKEN:
                    for c in range(d):
                        res[b, c] += table[tok, c] + dtable[tok, c]
                else:
                    for c in range(d):
                        res[b, c] += table[tok, c]
            m = <double>(offsets[b + 1] - offsets[b])
            for c in range(d):
                res[b, c] = res[b, c] / m
    return out


def scatter_mean(const double[:, ::1] grad_pooled, const cnp.int64_t[::1] ids,
                 const cnp.int64_t[::1] offsets, double[:, ::1] out):
    cdef Py_ssize_t n_ex = offsets.shape[0] - 1
    cdef Py_ssize_t d = grad_pooled.shape[1]
    cdef Py_ssize_t b, j, c, tok
    cdef double m
    with nogil:
        for b in range(n_ex):
            m = <double>(offsets[b + 1] - offsets[b])
            for j in range(offsets[b], offsets[b + 1]):
                tok = ids[j]
                for c in range(d):
                    out[tok, c] += grad_pooled[b, c] / m
    return np.asarray(out)


cdef inline bint _before(double s1, Py_ssize_t i1, double s2, Py_ssize_t i2) nogil:
    return s1 > s2 or (s1 == s2 and i1 < i2)


def topk_rows(const double[:, ::1] scores, Py_ssize_t k, const cnp.int64_t[::1] exclude):
    cdef Py_ssize_t n_rows = scores.shape[0]
    cdef Py_ssize_t n_cols = scores.shape[1]
    cdef Py_ssize_t r, j, filled, pos, kk
    cdef bint excluding = False
    cdef double s
    for r in range(n_rows):
        if exclude[r] >= 0:
            excluding = True
            break
    kk = min(k, n_cols - 1 if excluding else n_cols)
    if kk <= 0:
        return np.empty((n_rows, 0), dtype=np.int64)
    out = np.empty((n_rows, kk), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] idx = out
    cdef double[::1] best = np.empty(kk, dtype=np.float64)
    with nogil:
        for r in range(n_rows):
            filled = 0
            for j in range(n_cols):
                if j == exclude[r]:
                    continue
                s = scores[r, j]
                if filled == kk and not _before(s, j, best[kk - 1], idx[r, kk - 1]):
                    continue
                pos = filled if filled < kk else kk - 1
                # insertion: shift worse entries one slot down
                while pos > 0 and _before(s, j, best[pos - 1], idx[r, pos - 1]):
                    if pos < kk:
                        best[pos] = best[pos - 1]
                        idx[r, pos] = idx[r, pos - 1]
                    pos -= 1
                best[pos] = s
                idx[r, pos] = j
                if filled < kk:
                    filled += 1
    return out
