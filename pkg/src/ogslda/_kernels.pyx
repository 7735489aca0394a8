# cython: language_level=3
"""Compiled hot loops: transition counting and pairwise L1 sums."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def transition_counts(const cnp.int64_t[::1] codes, Py_ssize_t n):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] view = out
    cdef Py_ssize_t t, i, j
    cdef Py_ssize_t length = codes.shape[0]
    for t in range(length - 1):
        i = codes[t]
        j = codes[t + 1]
        if i < 0 or i >= n or j < 0 or j >= n:
            raise IndexError(f"opcode code out of range at position {t}")
        view[i, j] += 1.0
    return out


def pairwise_l1(const double[:, ::1] x, const double[:, ::1] y):
    """Sum of absolute differences for every row pair, accumulated left to right."""
    cdef Py_ssize_t nx = x.shape[0]
    cdef Py_ssize_t ny = y.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    if y.shape[1] != d:
        raise ValueError("row length mismatch")
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((nx, ny), dtype=np.float64)
    cdef double[:, ::1] view = out
    cdef Py_ssize_t a, b, c
    cdef double acc, diff
    with nogil:
        for a in range(nx):
            for b in range(ny):
                acc = 0.0
                for c in range(d):
                    diff = x[a, c] - y[b, c]
                    if diff < 0:
                        diff = -diff
                    acc = acc + diff
                view[a, b] = acc
    return out
