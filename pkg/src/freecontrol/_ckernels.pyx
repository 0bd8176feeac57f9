# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Pure-numpy twins live in ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, INFINITY

cnp.import_array()


def hermitian_from_normals(const double[:, ::1] z, int n, double var):
    """Assemble a batch of Hermitian matrices from standard normals.

    ``z`` has shape ``(batch, n*n)``: the first ``n`` entries of each row fill
    the diagonal, the remaining pairs fill the strict upper triangle.
    """
    cdef Py_ssize_t batch = z.shape[0]
    cdef Py_ssize_t b, i, j, k
    cdef double sd = sqrt(var)
    cdef double so = sqrt(0.5 * var)
    cdef double re, im
    out = np.empty((batch, n, n), dtype=np.complex128)
    cdef double complex[:, :, ::1] h = out
    for b in range(batch):
        for i in range(n):
            h[b, i, i] = sd * z[b, i]
        k = n
        for i in range(n):
            for j in range(i + 1, n):
                re = so * z[b, k]
                im = so * z[b, k + 1]
                k += 2
                h[b, i, j] = re + 1j * im
                h[b, j, i] = re - 1j * im
    return out


def trace_prod(const double complex[:, :, ::1] a, const double complex[:, :, ::1] b):
    """Batched ``tr(A @ B)`` (unnormalized) in O(n^2) per pair."""
    cdef Py_ssize_t batch = a.shape[0]
    cdef Py_ssize_t n = a.shape[1]
    cdef Py_ssize_t m = a.shape[2]
    cdef Py_ssize_t s, i, j
    cdef double complex acc
    out = np.empty(batch, dtype=np.complex128)
    cdef double complex[::1] o = out
    for s in range(batch):
        acc = 0
        for i in range(n):
            for j in range(m):
                acc = acc + a[s, i, j] * b[s, j, i]
        o[s] = acc
    return out


def dyson_repulsion(const double[:, ::1] lam):
    """Row-wise ``sum_{j != i} 1 / (lam_i - lam_j)`` and the minimal gap.

    Returns ``(force, gap)`` with ``force`` shaped like ``lam`` and ``gap`` of
    shape ``(batch,)``.
    """
    cdef Py_ssize_t batch = lam.shape[0]
    cdef Py_ssize_t n = lam.shape[1]
    cdef Py_ssize_t b, i, j
    cdef double diff, inv, g
    force = np.zeros((batch, n), dtype=np.float64)
    gap = np.empty(batch, dtype=np.float64)
    cdef double[:, ::1] f = force
    cdef double[::1] gp = gap
    for b in range(batch):
        g = INFINITY
        for i in range(n):
            for j in range(i + 1, n):
                diff = lam[b, i] - lam[b, j]
                inv = 1.0 / diff
                f[b, i] += inv
                f[b, j] -= inv
                if fabs(diff) < g:
                    g = fabs(diff)
        gp[b] = g
    return force, gap
