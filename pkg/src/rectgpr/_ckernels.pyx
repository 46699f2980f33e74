# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled covariance assembly.

Mirrors ``_pykernels.cross_covariance`` operation for operation so both
backends accumulate squared distances in the same order.
"""
import numpy as np

from cython.parallel cimport prange
from libc.math cimport exp, sqrt


cdef inline double _value(int family, double r2, double scale, double sigma2) noexcept nogil:
    cdef double t
    if r2 < 0.0:
        r2 = 0.0
    if family == 0:
        return sigma2 * exp(-(r2 * scale))
    t = sqrt(r2) * scale
    if family == 1:
        return sigma2 * exp(-t)
    if family == 2:
        return sigma2 * (1.0 + t) * exp(-t)
    return sigma2 * (1.0 + t + t * t / 3.0) * exp(-t)


def cross_covariance(int family, double scale, double sigma2,
                     const double[:, ::1] rows, const double[:, ::1] cols,
                     int num_threads=1):
    cdef Py_ssize_t n = rows.shape[0]
    cdef Py_ssize_t m = cols.shape[0]
    cdef Py_ssize_t dim = rows.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double acc, d

    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] res = out
    if n == 0 or m == 0:
        return out

    for i in prange(n, nogil=True, schedule="static", num_threads=num_threads):
        for j in range(m):
            acc = 0.0
            for k in range(dim):
                d = rows[i, k] - cols[j, k]
                acc = acc + d * d
            res[i, j] = _value(family, acc, scale, sigma2)
    return out
