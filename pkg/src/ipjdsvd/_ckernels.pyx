# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled CSR product kernels."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def csr_matvec(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
               const double[::1] data, const double[::1] x, double[::1] out):
    cdef Py_ssize_t nrows = indptr.shape[0] - 1
    cdef Py_ssize_t i, p
    cdef double acc
    with nogil:
        for i in range(nrows):
            acc = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                acc = acc + data[p] * x[indices[p]]
            out[i] = acc


def csr_rmatvec(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
                const double[::1] data, const double[::1] y, double[::1] out):
    cdef Py_ssize_t nrows = indptr.shape[0] - 1
    cdef Py_ssize_t i, p
    cdef double yi
    with nogil:
        out[:] = 0.0
        for i in range(nrows):
            yi = y[i]
            if yi == 0.0:
                continue
            for p in range(indptr[i], indptr[i + 1]):
                out[indices[p]] = out[indices[p]] + data[p] * yi
