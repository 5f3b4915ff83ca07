import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import dawsn

from ccmlab.hardy_grid import (
    Grid, GridMismatchError, HardyField, dump_csv, from_samples, full_transform,
    halfplane_eval, hardy_leakage, load_csv, make_grid, poisson_semigroup,
    project_padded, schrodinger_flow, sobolev_norm, synthesize, szego_project,
)
from ccmlab.observables import soliton

from conftest import random_hardy

SQRT2 = np.sqrt(2.0)


# --- grid -----------------------------------------------------------------

def test_grid_small_box():
    g = make_grid(8, 2 * np.pi)
    assert g.dx == pytest.approx(np.pi / 4)
    np.testing.assert_allclose(g.xi, [0, 1, 2, 3])
    assert g.n_modes == 4


def test_grid_spacing():
    g = make_grid(1024, 100.0)
    assert g.dx == pytest.approx(100 / 1024)
    assert g.xi[1] == pytest.approx(2 * np.pi / 100)
    assert g.x[0] == pytest.approx(-50.0)


@pytest.mark.parametrize("n, length", [(7, 10.0), (0, 1.0), (8, 0.0), (8, -1.0), (8, np.inf)])
def test_grid_rejects_bad_input(n, length):
    with pytest.raises(ValueError):
        make_grid(n, length)


def test_grid_arrays_read_only():
    g = make_grid(16, 1.0)
    with pytest.raises(ValueError):
        g.x[0] = 1.0


def test_mismatched_grids_raise():
    a = HardyField(make_grid(16, 1.0), np.zeros(8))
    b = HardyField(make_grid(16, 2.0), np.zeros(8))
    with pytest.raises(GridMismatchError):
        a + b


# --- transforms -----------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_synthesize_inverts_transform(seed):
    g = make_grid(64, 13.0)
    f = random_hardy(g, seed)
    back = full_transform(g, f.samples)
    np.testing.assert_allclose(back[: g.n_modes], f.spectrum, atol=1e-13)
    np.testing.assert_allclose(back[g.n_modes:], 0, atol=1e-13)


def test_plancherel(grid):
    f = random_hardy(grid, 1)
    assert f.sample_norm() == pytest.approx(f.norm(), rel=1e-12)


def test_padded_product_is_exact(small_grid):
    # |f|^2 has spectrum on (-n/2, n/2); the 2x grid resolves it without aliasing
    f = random_hardy(small_grid, 2)
    prod = project_padded(small_grid, np.abs(f.padded_samples()) ** 2)
    c = f.spectrum
    direct = np.array([np.sum(c[k:] * np.conj(c[: small_grid.n_modes - k]))
                       for k in range(small_grid.n_modes)])
    np.testing.assert_allclose(prod, direct * small_grid.dxi / np.sqrt(2 * np.pi), atol=1e-13)


# --- projection -----------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_projection_idempotent_and_self_adjoint(seed):
    g = make_grid(64, 10.0)
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    v = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    pu = szego_project(g, u)
    np.testing.assert_allclose(szego_project(g, pu.samples).spectrum, pu.spectrum, atol=1e-12)
    lhs = np.vdot(v, pu.samples) * g.dx
    rhs = np.vdot(szego_project(g, v).samples, u) * g.dx
    assert abs(lhs - rhs) < 1e-12 * (1 + abs(lhs))


def test_projection_fixes_soliton(grid):
    r = soliton(1.0, 0.0, grid)
    np.testing.assert_allclose(szego_project(grid, r.samples).spectrum, r.spectrum, atol=1e-12)


def test_projection_of_cosine():
    g = make_grid(128, 20.0)
    f = szego_project(g, np.cos(2 * np.pi * g.x / 20.0))
    np.testing.assert_allclose(f.samples, 0.5 * np.exp(2j * np.pi * g.x / 20.0), atol=1e-13)


def _periodic_gaussian_oracle(x, length):
    # (f + i H f)/2 for f = exp(-x^2); H uses the periodic kernel cot(pi u / L) / L
    # expanded in powers of u / L, accurate to 1e-8 for |x| < L/8
    sp = np.sqrt(np.pi)
    h = 2 / sp * dawsn(x)
    h -= np.pi / (3 * length ** 2) * sp * x
    h -= np.pi ** 3 / (45 * length ** 4) * sp * (x ** 3 + 1.5 * x)
    h -= 2 * np.pi ** 5 / (945 * length ** 6) * sp * (x ** 5 + 5 * x ** 3 + 3.75 * x)
    return 0.5 * np.exp(-x ** 2) + 0.5j * h


@pytest.mark.parametrize("length, n", [(100.0, 4096), (200.0, 8192)])
def test_projection_of_gaussian_matches_dawson(length, n):
    g = make_grid(n, length)
    f = szego_project(g, np.exp(-g.x ** 2), line_endpoint=True)
    inner = np.abs(g.x) < length / 8
    oracle = _periodic_gaussian_oracle(g.x, length)
    assert np.max(np.abs(f.samples - oracle)[inner]) < 1e-8
    # the full-weight projector keeps the whole mean instead of half of it
    full = szego_project(g, np.exp(-g.x ** 2))
    np.testing.assert_allclose(full.samples - f.samples, np.sqrt(np.pi) / (2 * length), atol=1e-13)


def test_from_samples_rejects_leakage(small_grid):
    with pytest.raises(ValueError):
        from_samples(small_grid, np.cos(2 * np.pi * small_grid.x / 40.0))
    f = random_hardy(small_grid, 3)
    assert hardy_leakage(small_grid, f.samples) < 1e-25
    np.testing.assert_allclose(from_samples(small_grid, f.samples).spectrum, f.spectrum, atol=1e-13)


def test_projection_rejects_nan(small_grid):
    with pytest.raises(ValueError):
        szego_project(small_grid, np.full(small_grid.n_points, np.nan))


# --- half-plane -----------------------------------------------------------

def test_halfplane_soliton_at_i():
    # closed-form periodic profile: sqrt(2pi/L) a w / (1 - r w), w = exp(2 pi i z / L)
    g = make_grid(4096, 100.0)
    r = soliton(1.0, 0.0, g)
    rr = np.exp(-2 * np.pi / 100.0)
    a = -1j * np.sqrt(1 - rr ** 2)
    z = 0.3 + 1.0j
    w = np.exp(2j * np.pi * z / 100.0)
    exact = np.sqrt(2 * np.pi / 100.0) * a * w / (1 - rr * w)
    assert halfplane_eval(r, z) == pytest.approx(exact, abs=1e-13)


@pytest.mark.parametrize("length", [400.0, 800.0, 1600.0])
def test_halfplane_soliton_approaches_line_value(length):
    g = make_grid(8192, length)
    err = abs(halfplane_eval(soliton(1.0, 0.0, g), 1j) - np.sqrt(2) / 2j)
    assert err < 2.0 * np.pi / length


def test_halfplane_zero_and_bad_z(small_grid):
    zero = HardyField(small_grid, np.zeros(small_grid.n_modes))
    assert halfplane_eval(zero, 1 + 1j) == 0
    f = random_hardy(small_grid, 4)
    for z in (1.0 + 0j, 1 - 1j, complex(np.nan, 1)):
        with pytest.raises(ValueError):
            halfplane_eval(f, z)


def test_halfplane_decay_in_height(grid):
    # |f(x + ib)| <= ||f|| / sqrt(4 pi b)
    f = random_hardy(grid, 5)
    for b in (1.0, 4.0, 16.0):
        v = halfplane_eval(f, 0.7 + 1j * b)
        assert abs(v) <= f.norm() / np.sqrt(4 * np.pi * b) * (1 + 1e-12)


def test_halfplane_array_and_poisson_agree(grid):
    f = random_hardy(grid, 6)
    b = 0.75
    vals = halfplane_eval(f, grid.x + 1j * b)
    np.testing.assert_allclose(vals, poisson_semigroup(f, b).samples, atol=1e-12)


# --- semigroups -----------------------------------------------------------

def test_poisson_identity_and_contraction(grid):
    f = random_hardy(grid, 7)
    np.testing.assert_array_equal(poisson_semigroup(f, 0.0).spectrum, f.spectrum)
    assert poisson_semigroup(f, 0.3).norm() <= f.norm()
    with pytest.raises(ValueError):
        poisson_semigroup(f, -1.0)


def test_poisson_shifts_soliton():
    g = make_grid(4096, 100.0)
    r = soliton(1.0, 0.0, g)
    b = 1.0
    np.testing.assert_allclose(poisson_semigroup(r, b).samples,
                               halfplane_eval(r, g.x + 1j * b), atol=1e-13)


def test_poisson_group_law(grid):
    f = random_hardy(grid, 8)
    two = poisson_semigroup(poisson_semigroup(f, 0.4), 0.6)
    np.testing.assert_allclose(two.spectrum, poisson_semigroup(f, 1.0).spectrum, atol=1e-15)


def test_schrodinger_flow_unitary_and_group(grid):
    f = random_hardy(grid, 9)
    np.testing.assert_array_equal(schrodinger_flow(f, 0.0).spectrum, f.spectrum)
    assert schrodinger_flow(f, 0.7).norm() == pytest.approx(f.norm(), rel=1e-13)
    a = schrodinger_flow(schrodinger_flow(f, 0.3), 0.4)
    np.testing.assert_allclose(a.spectrum, schrodinger_flow(f, 0.7).spectrum, atol=1e-14)


def test_schrodinger_dispersion_of_packet():
    # wide Hardy Gaussian: the free flow has a closed form; compare at three points
    g = make_grid(4096, 400.0)
    sigma, k0, t = 4.0, 3.0, 1.0
    f = szego_project(g, np.exp(-g.x ** 2 / (2 * sigma ** 2) + 1j * k0 * g.x))
    out = schrodinger_flow(f, t)
    s2 = sigma ** 2 + 2j * t
    exact = (sigma / np.sqrt(s2)) * np.exp(-(g.x - 2 * k0 * t) ** 2 / (2 * s2)
                                           + 1j * k0 * g.x - 1j * k0 ** 2 * t)
    for x0 in (-2.0, 6.0, 9.0):
        j = int(np.argmin(np.abs(g.x - x0)))
        assert out.samples[j] == pytest.approx(exact[j], abs=1e-10)
    assert np.max(np.abs(out.samples)) <= (sigma ** 2 / abs(s2)) ** 0.5 + 1e-10


def test_sobolev_norm(grid):
    f = random_hardy(grid, 10)
    assert sobolev_norm(f, 0.0) == pytest.approx(f.norm(), rel=1e-13)
    assert sobolev_norm(HardyField(grid, np.zeros(grid.n_modes)), 0.5) == 0.0


def test_sobolev_half_of_soliton():
    # periodic soliton: |q^_k|^2 dxi = 2 pi (1 - r^2) r^(2k-2), k >= 1
    g = make_grid(8192, 200.0)
    r = np.exp(-2 * np.pi / 200.0)
    k = np.arange(1, g.n_modes)
    expect = np.sum(2 * np.pi * (1 - r ** 2) * r ** (2 * k - 2) * (g.xi[k] + 1.0))
    assert sobolev_norm(soliton(1.0, 0.0, g), 0.5) ** 2 == pytest.approx(expect, rel=1e-12)
    # continuum value 4 pi int (xi + 1) e^(-2 xi) = 3 pi, approached at rate dxi
    assert abs(expect - 3 * np.pi) < 3 * g.dxi * 2 * np.pi


# --- csv ------------------------------------------------------------------

def test_csv_round_trip(tmp_path, small_grid):
    f = random_hardy(small_grid, 11)
    p = tmp_path / "f.csv"
    dump_csv(f, p)
    back = load_csv(p)
    assert back.grid == small_grid
    np.testing.assert_array_equal(back.spectrum, f.spectrum)
    buf = io.StringIO()
    dump_csv(f, buf)
    buf.seek(0)
    np.testing.assert_array_equal(load_csv(buf).spectrum, f.spectrum)


def test_csv_rejects_missing_header():
    with pytest.raises(ValueError):
        load_csv(io.StringIO("x,re_q\n0,1\n"))


def test_synthesize_batched(small_grid):
    a, b = random_hardy(small_grid, 12), random_hardy(small_grid, 13)
    both = synthesize(small_grid, np.stack([a.spectrum, b.spectrum]))
    np.testing.assert_allclose(both[1], b.samples, atol=1e-14)
    assert isinstance(small_grid, Grid)
