# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels (see _ref.py for contracts)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, sin, sqrt, pi

cnp.import_array()


def single_bin_amplitudes(windows, long k):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] w = np.ascontiguousarray(windows, dtype=np.float64)
    cdef Py_ssize_t n_rows = w.shape[0]
    cdef Py_ssize_t n = w.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n_rows, dtype=np.float64)
    cdef double omega = 2.0 * pi * k / n
    cdef double cw = cos(omega)
    cdef double sw = sin(omega)
    cdef double coeff = 2.0 * cw
    cdef double z0, z1, z2, re, im
    cdef Py_ssize_t r, i
    for r in range(n_rows):
        z1 = 0.0
        z2 = 0.0
        for i in range(n):
            z0 = w[r, i] + coeff * z1 - z2
            z2 = z1
            z1 = z0
        re = cw * z1 - z2
        im = sw * z1
        out[r] = sqrt(re * re + im * im) / n
    return out


def clamped_walk(steps, double clamp):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s = np.ascontiguousarray(steps, dtype=np.float64)
    cdef Py_ssize_t n = s.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef double level = 0.0
    cdef double lo = -clamp
    cdef double hi = clamp
    cdef Py_ssize_t i
    for i in range(n):
        level += s[i]
        if level > hi:
            level = hi
        elif level < lo:
            level = lo
        out[i] = level
    return out


def knn_predict(train_x, train_y, queries, long k):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] tx = np.ascontiguousarray(train_x, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ty = np.ascontiguousarray(train_y, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] q = np.ascontiguousarray(np.atleast_2d(queries), dtype=np.float64)
    cdef Py_ssize_t n_train = tx.shape[0]
    cdef Py_ssize_t n_feat = tx.shape[1]
    cdef Py_ssize_t n_q = q.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] labels = np.empty(n_q, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] best_d = np.empty(k, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] best_i = np.empty(k, dtype=np.int64)
    cdef Py_ssize_t r, t, f, j, m, filled
    cdef double d, diff
    cdef long votes
    for r in range(n_q):
        filled = 0
        for t in range(n_train):
            d = 0.0
            for f in range(n_feat):
                diff = q[r, f] - tx[t, f]
                d += diff * diff
            # insertion keeping (distance, index) lexicographic order
            if filled < k:
                j = filled
                while j > 0 and (best_d[j - 1] > d or (best_d[j - 1] == d and best_i[j - 1] > t)):
                    best_d[j] = best_d[j - 1]
                    best_i[j] = best_i[j - 1]
                    j -= 1
                best_d[j] = d
                best_i[j] = t
                filled += 1
            elif d < best_d[k - 1] or (d == best_d[k - 1] and t < best_i[k - 1]):
                j = k - 1
                while j > 0 and (best_d[j - 1] > d or (best_d[j - 1] == d and best_i[j - 1] > t)):
                    best_d[j] = best_d[j - 1]
                    best_i[j] = best_i[j - 1]
                    j -= 1
                best_d[j] = d
                best_i[j] = t
        votes = 0
        m = k if filled > k else filled
        for j in range(m):
            votes += ty[best_i[j]]
        labels[r] = 1 if 2 * votes > k else 0
    return labels


def minmax_windows(windows):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] w = np.ascontiguousarray(windows, dtype=np.float64)
    cdef Py_ssize_t n_rows = w.shape[0]
    cdef Py_ssize_t n = w.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n_rows, n), dtype=np.float64)
    cdef Py_ssize_t r, i
    cdef double lo, hi, span
    for r in range(n_rows):
        lo = w[r, 0]
        hi = w[r, 0]
        for i in range(1, n):
            if w[r, i] < lo:
                lo = w[r, i]
            elif w[r, i] > hi:
                hi = w[r, i]
        span = hi - lo
        if span == 0.0:
            for i in range(n):
                out[r, i] = 0.5
        else:
            for i in range(n):
                out[r, i] = (w[r, i] - lo) / span
    return out
