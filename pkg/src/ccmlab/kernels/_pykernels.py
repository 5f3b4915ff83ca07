"""Pure numpy versions of the compiled kernels (same signatures)."""

import numpy as np


def toeplitz_gram(c, zero_weight=1.0):
    c = np.ascontiguousarray(c, dtype=np.complex128)
    n = c.shape[0]
    g = np.empty((n, n), dtype=np.complex128)
    rows = np.arange(n)
    for d in range(n):
        prod = c[d:] * np.conj(c[: n - d])
        diag = np.cumsum(prod) - (1.0 - zero_weight) * prod
        g[rows[: n - d] + d, rows[: n - d]] = diag
        if d:
            g[rows[: n - d], rows[: n - d] + d] = np.conj(diag)
    return g


def halfplane_sum(coeffs, z, dxi):
    coeffs = np.atleast_2d(coeffs)
    k = np.arange(coeffs.shape[1])
    phase = np.exp(1j * dxi * np.outer(z, k))
    return np.einsum("bk,bk->b", coeffs, phase)


def halfplane_sum_shared(coeffs, z, dxi, chunk=256):
    k = np.arange(coeffs.shape[0])
    out = np.empty(z.shape[0], dtype=np.complex128)
    for s in range(0, z.shape[0], chunk):
        out[s:s + chunk] = np.exp(1j * dxi * np.outer(z[s:s + chunk], k)) @ coeffs
    return out
