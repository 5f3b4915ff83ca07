"""Hot kernels with a compiled backend and a numpy fallback.

The compiled extension is used when it was built and imports cleanly. Set
``CCMLAB_KERNELS=python`` to force the numpy fallback (the benchmark and the
backend-agreement tests do this explicitly through :func:`get_backend`).
"""

import os

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["compiled"] = _ckernels

if os.environ.get("CCMLAB_KERNELS", "").lower() == "python" or _ckernels is None:
    BACKEND = "python"
else:
    BACKEND = "compiled"


def available_backends():
    return sorted(_BACKENDS)


def get_backend(name=None):
    """Return the kernel module ``name`` (default: the active backend)."""
    name = BACKEND if name is None else name
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} not available; have {available_backends()}")


def toeplitz_gram(c, zero_weight=1.0):
    """Hermitian Gram matrix of the lower-triangular Toeplitz matrix built from ``c``.

    ``G[k, j] = sum_{m=0}^{min(k,j)} w_m c[k-m] conj(c[j-m])`` with ``w_0 = zero_weight``
    and ``w_m = 1`` otherwise. This is the matrix of ``f -> c * C+(conj(c) f)`` on the
    nonnegative frequency ladder.
    """
    c = np.ascontiguousarray(c, dtype=np.complex128)
    return _BACKENDS[BACKEND].toeplitz_gram(c, float(zero_weight))


def halfplane_sum(coeffs, z, dxi):
    """``sum_k coeffs[k] exp(i k dxi z)`` for ``Im z >= 0``.

    A 1-D ``coeffs`` is evaluated at every entry of ``z``; a 2-D ``coeffs`` pairs
    row ``b`` with ``z[b]``. Returns an array shaped like ``z`` (1-D case) or with
    one entry per row.
    """
    coeffs = np.asarray(coeffs, dtype=np.complex128)
    kern = _BACKENDS[BACKEND]
    if coeffs.ndim == 1:
        zarr = np.asarray(z, dtype=np.complex128)
        flat = np.ascontiguousarray(zarr.ravel())
        out = kern.halfplane_sum_shared(np.ascontiguousarray(coeffs), flat, float(dxi))
        return out.reshape(zarr.shape)
    coeffs = np.ascontiguousarray(coeffs)
    z = np.ascontiguousarray(np.broadcast_to(np.asarray(z, dtype=np.complex128),
                                             (coeffs.shape[0],)))
    return kern.halfplane_sum(coeffs, z, float(dxi))
