# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled sparse kernels. Signatures mirror :mod:`fusiongnn._kernels_py`."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()


def csr_spmm(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
             const double[::1] data, const double[:, ::1] dense):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t k = dense.shape[1]
    out_arr = np.zeros((n, k), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, p, j, c
    cdef double v
    with nogil:
        for i in range(n):
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                v = data[p]
                for c in range(k):
                    out[i, c] += v * dense[j, c]
    return out_arr


def sddmm(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
          const double[:, ::1] left, const double[:, ::1] right):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t k = left.shape[1]
    out_arr = np.empty(indices.shape[0], dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, p, j, c
    cdef double acc
    with nogil:
        for i in range(n):
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                acc = 0.0
                for c in range(k):
                    acc += left[i, c] * right[j, c]
                out[p] = acc
    return out_arr


def segment_sum(const cnp.int64_t[::1] indptr, const double[::1] values):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    out_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, p
    cdef double acc
    with nogil:
        for i in range(n):
            acc = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                acc += values[p]
            out[i] = acc
    return out_arr


def segment_softmax(const cnp.int64_t[::1] indptr, const double[::1] scores):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    out_arr = np.empty(scores.shape[0], dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, p, lo, hi
    cdef double m, z
    with nogil:
        for i in range(n):
            lo = indptr[i]
            hi = indptr[i + 1]
            if lo == hi:
                continue
            m = scores[lo]
            for p in range(lo + 1, hi):
                if scores[p] > m:
                    m = scores[p]
            z = 0.0
            for p in range(lo, hi):
                out[p] = exp(scores[p] - m)
                z += out[p]
            for p in range(lo, hi):
                out[p] /= z
    return out_arr
