# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled triangular loops: Volterra composition and resolvent sweep.

Both kernels work on square blocks of a lower-triangular array. Products of
whole blocks go to BLAS ``zgemm``; only the trapezoid end weights and the
sequential part of the resolvent sweep run as plain loops. Arrays are C
ordered, so a row-major product ``C = A B`` is issued as the column-major
product ``C^T = B^T A^T``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs
from scipy.linalg.cython_blas cimport zgemm

cnp.import_array()

cdef enum:
    BLOCK = 64


cdef inline void _gemm_acc(double complex *a, int lda, double complex *b, int ldb,
                           double complex *c, int ldc, int m, int n, int k) noexcept nogil:
    """Row-major ``c[m x n] += a[m x k] @ b[k x n]``."""
    cdef char tr = b'N'
    cdef double complex one = 1.0
    if m <= 0 or n <= 0 or k <= 0:
        return
    zgemm(&tr, &tr, &n, &m, &k, &one, b, &ldb, a, &lda, &one, c, &ldc)


def compose(f, g, double h):
    cdef const double complex[:, ::1] F = np.ascontiguousarray(f, dtype=np.complex128)
    cdef const double complex[:, ::1] G = np.ascontiguousarray(g, dtype=np.complex128)
    cdef Py_ssize_t n = F.shape[0]
    out_arr = np.zeros((n, n), dtype=np.complex128)
    cdef double complex[:, ::1] out = out_arr
    cdef Py_ssize_t i0, i1, j0, j1, i, j
    cdef int ld = <int>n
    if n == 0:
        return out_arr
    with nogil:
        # S[I, J] = sum over k in [j0, i1) of F[I, k] G[k, J]; zeros above the
        # diagonal restrict the sum to j <= k <= i automatically
        i0 = 0
        while i0 < n:
            i1 = min(i0 + BLOCK, n)
            j0 = 0
            while j0 <= i0:
                j1 = min(j0 + BLOCK, n)
                _gemm_acc(<double complex *>&F[i0, j0], ld, <double complex *>&G[j0, j0], ld,
                          &out[i0, j0], ld, <int>(i1 - i0), <int>(j1 - j0), <int>(i1 - j0))
                j0 = j1
            i0 = i1
        for i in range(n):
            for j in range(i):
                out[i, j] = h * (out[i, j] - 0.5 * (F[i, j] * G[j, j] + F[i, i] * G[i, j]))
            for j in range(i, n):
                out[i, j] = 0
    return out_arr


def resolvent_sweep(x, double h, double bound):
    cdef const double complex[:, ::1] X = np.ascontiguousarray(x, dtype=np.complex128)
    cdef Py_ssize_t n = X.shape[0]
    r_arr = np.zeros((n, n), dtype=np.complex128)
    cdef double complex[:, ::1] R = r_arr
    # acc[i, j] collects sum_{k < i} X[i, k] R[k, j]
    acc_arr = np.zeros((n, n), dtype=np.complex128)
    cdef double complex[:, ::1] acc = acc_arr
    cdef Py_ssize_t i0, i1, j0, j1, i, j, k
    cdef Py_ssize_t failed = -1
    cdef int ld = <int>n
    cdef double complex a, denom, val
    with nogil:
        i0 = 0
        while i0 < n and failed < 0:
            i1 = min(i0 + BLOCK, n)
            # contributions of all finished rows k < i0
            j0 = 0
            while j0 < i0:
                j1 = min(j0 + BLOCK, n)
                _gemm_acc(<double complex *>&X[i0, j0], ld, &R[j0, j0], ld,
                          &acc[i0, j0], ld, <int>(i1 - i0), <int>(j1 - j0), <int>(i0 - j0))
                j0 = j1
            for i in range(i0, i1):
                # rows of this block finished so far
                for k in range(i0, i):
                    a = X[i, k]
                    if a == 0:
                        continue
                    for j in range(k + 1):
                        acc[i, j] = acc[i, j] + a * R[k, j]
                R[i, i] = X[i, i]
                if i == 0:
                    continue
                denom = 1.0 - 0.5 * h * X[i, i]
                if denom == 0:
                    failed = i
                    break
                for j in range(i):
                    val = (X[i, j] + h * (acc[i, j] - 0.5 * X[i, j] * X[j, j])) / denom
                    R[i, j] = val
                    if not (fabs(val.real) <= bound and fabs(val.imag) <= bound):
                        failed = i
                if failed >= 0:
                    break
            i0 = i1
    return r_arr, failed
