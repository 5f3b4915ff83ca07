# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Signatures mirror ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, cos, sin

cnp.import_array()


def toeplitz_gram(const double complex[::1] c, double zero_weight=1.0):
    """G[k, j] = sum_{m=0}^{min(k,j)} w_m c[k-m] conj(c[j-m]), w_0 = zero_weight."""
    cdef Py_ssize_t n = c.shape[0]
    cdef Py_ssize_t d, j
    cdef double complex s, term
    out = np.empty((n, n), dtype=np.complex128)
    cdef double complex[:, ::1] g = out
    for d in range(n):
        s = 0.0
        for j in range(n - d):
            term = c[j + d] * c[j].conjugate()
            g[j + d, j] = s + zero_weight * term
            if d > 0:
                g[j, j + d] = (s + zero_weight * term).conjugate()
            s = s + term
    return out


def halfplane_sum(const double complex[:, ::1] coeffs, const double complex[::1] z,
                  double dxi):
    """out[b] = sum_k coeffs[b, k] exp(i k dxi z[b])."""
    cdef Py_ssize_t nb = coeffs.shape[0]
    cdef Py_ssize_t n = coeffs.shape[1]
    cdef Py_ssize_t b, k
    cdef double complex acc, phase, step
    cdef double re, im
    out = np.empty(nb, dtype=np.complex128)
    cdef double complex[::1] res = out
    for b in range(nb):
        re = dxi * z[b].real
        im = dxi * z[b].imag
        step = exp(-im) * (cos(re) + 1j * sin(re))
        phase = 1.0
        acc = 0.0
        for k in range(n):
            acc = acc + coeffs[b, k] * phase
            phase = phase * step
        res[b] = acc
    return out


def halfplane_sum_shared(const double complex[::1] coeffs, const double complex[::1] z,
                         double dxi):
    """out[b] = sum_k coeffs[k] exp(i k dxi z[b])."""
    cdef Py_ssize_t nb = z.shape[0]
    cdef Py_ssize_t n = coeffs.shape[0]
    cdef Py_ssize_t b, k
    cdef double complex acc, phase, step
    cdef double re, im
    out = np.empty(nb, dtype=np.complex128)
    cdef double complex[::1] res = out
    for b in range(nb):
        re = dxi * z[b].real
        im = dxi * z[b].imag
        step = exp(-im) * (cos(re) + 1j * sin(re))
        phase = 1.0
        acc = 0.0
        for k in range(n):
            acc = acc + coeffs[k] * phase
            phase = phase * step
        res[b] = acc
    return out
