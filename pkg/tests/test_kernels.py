import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccmlab import kernels

BACKENDS = kernels.available_backends()


def _direct_gram(c, w0):
    n = c.size
    t = np.zeros((n, n), dtype=complex)
    for m in range(n):
        t[m:, m] = c[: n - m]
    wt = t.copy()
    wt[:, 0] *= np.sqrt(w0)
    # G = T W T^*, with the m = 0 column weighted
    return wt @ wt.conj().T


def test_compiled_backend_present():
    # the build is optional; this records which backend the suite ran against
    assert kernels.BACKEND in BACKENDS
    assert "python" in BACKENDS


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


@pytest.mark.parametrize("name", BACKENDS)
@pytest.mark.parametrize("w0", [1.0, 0.5])
def test_gram_matches_direct_product(name, w0):
    rng = np.random.default_rng(0)
    c = rng.standard_normal(40) + 1j * rng.standard_normal(40)
    got = kernels.get_backend(name).toeplitz_gram(np.ascontiguousarray(c), w0)
    np.testing.assert_allclose(got, _direct_gram(c, w0), atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 64))
def test_backends_agree_on_gram(seed, n):
    rng = np.random.default_rng(seed)
    c = np.ascontiguousarray(rng.standard_normal(n) + 1j * rng.standard_normal(n))
    ref = kernels.get_backend("python").toeplitz_gram(c, 0.5)
    for name in BACKENDS:
        np.testing.assert_allclose(kernels.get_backend(name).toeplitz_gram(c, 0.5), ref, atol=1e-12)


@pytest.mark.parametrize("name", BACKENDS)
def test_halfplane_sums(name):
    rng = np.random.default_rng(1)
    n, dxi = 50, 0.1
    coeffs = rng.standard_normal((3, n)) + 1j * rng.standard_normal((3, n))
    z = np.array([0.3 + 0.5j, -2.0 + 1.0j, 4.0 + 0.0j])
    k = np.arange(n)
    expect = np.array([np.sum(coeffs[b] * np.exp(1j * k * dxi * z[b])) for b in range(3)])
    mod = kernels.get_backend(name)
    np.testing.assert_allclose(mod.halfplane_sum(coeffs, z, dxi), expect, rtol=1e-12)
    shared = np.array([np.sum(coeffs[0] * np.exp(1j * k * dxi * zz)) for zz in z])
    np.testing.assert_allclose(mod.halfplane_sum_shared(np.ascontiguousarray(coeffs[0]), z, dxi),
                               shared, rtol=1e-12)


def test_dispatch_shapes():
    coeffs = np.ones(8, dtype=complex)
    z = np.full((2, 3), 1j)
    assert kernels.halfplane_sum(coeffs, z, 0.5).shape == (2, 3)
    rows = kernels.halfplane_sum(np.ones((4, 8)), 1j, 0.5)
    assert rows.shape == (4,)
