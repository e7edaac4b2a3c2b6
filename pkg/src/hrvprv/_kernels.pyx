# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled template-matching kernels for approximate and sample entropy."""
import numpy as np

from libc.math cimport fabs


def apen_counts(const double[::1] x, int m, double r):
    """Per-template match counts at lengths ``m`` and ``m + 1``, self-matches included.

    Returns ``(cm, cm1)`` where ``cm`` has ``n - m + 1`` entries and ``cm1`` has ``n - m``.
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t nm = n - m + 1
    cdef Py_ssize_t i, j, k
    cdef bint match
    cm_arr = np.zeros(nm, dtype=np.int64)
    cm1_arr = np.zeros(nm - 1, dtype=np.int64)
    cdef long long[::1] cm = cm_arr
    cdef long long[::1] cm1 = cm1_arr
    for i in range(nm):
        cm[i] += 1
        if i < nm - 1:
            cm1[i] += 1
        for j in range(i + 1, nm):
            match = True
            for k in range(m):
                if fabs(x[i + k] - x[j + k]) > r:
                    match = False
                    break
            if not match:
                continue
            cm[i] += 1
            cm[j] += 1
            if j < nm - 1 and fabs(x[i + m] - x[j + m]) <= r:
                cm1[i] += 1
                cm1[j] += 1
    return cm_arr, cm1_arr


def sampen_counts(const double[::1] x, int m, double r):
    """Pair counts ``(A, B)`` over the first ``n - m`` templates, self-matches excluded."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t nt = n - m
    cdef Py_ssize_t i, j, k
    cdef long long a = 0, b = 0
    cdef bint match
    for i in range(nt):
        for j in range(i + 1, nt):
            match = True
            for k in range(m):
                if fabs(x[i + k] - x[j + k]) > r:
                    match = False
                    break
            if not match:
                continue
            b += 1
            if fabs(x[i + m] - x[j + m]) <= r:
                a += 1
    return a, b
