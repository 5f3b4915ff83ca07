import json
import warnings

import numpy as np
import pytest

from ccmlab.evolve import evolve_field
from ccmlab.explicit_formula import (
    ExplicitEvalPlan, SolverError, a0_apply, batched_gmres, cauchy_reduction, compare_line,
    comparison_json, explicit_line, explicit_value, fixed_point_residual, i_plus_limit,
    i_plus_spectral, neumann_partial_sum, solve_batch, solve_resolvent_state, x_resolvent,
)
from ccmlab.hardy_grid import (
    HardyField, halfplane_eval, make_grid, poisson_semigroup, schrodinger_flow,
)
from ccmlab.initial_data import gaussian_packet, random_field
from ccmlab.observables import soliton, soliton_line, soliton_speed


@pytest.fixture(scope="module")
def box():
    return make_grid(1024, 100.0)


@pytest.fixture(scope="module")
def packet(box):
    return random_field(box, 3, target_mass=3.0)


def _random_z(rng, half_width=5.0):
    return complex(rng.uniform(-half_width, half_width), rng.uniform(0.2, 3.0))


# --- GMRES ----------------------------------------------------------------

def test_batched_gmres_solves_independent_systems():
    rng = np.random.default_rng(0)
    n, m = 30, 5
    mats = np.eye(n) + 0.3 * (rng.standard_normal((m, n, n)) + 1j * rng.standard_normal((m, n, n))) / np.sqrt(n)
    b = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))

    def apply(x, rows):
        return np.einsum("rij,rj->ri", mats[rows], x)

    x, res, iters = batched_gmres(apply, b, tol=1e-12, restart=10, max_iter=300)
    for i in range(m):
        np.testing.assert_allclose(x[i], np.linalg.solve(mats[i], b[i]), atol=1e-9)
    assert np.all(res <= 1e-12 * np.linalg.norm(b, axis=1) * (1 + 1e-9))
    assert np.all(iters > 0)


# --- X resolvent ----------------------------------------------------------

def test_x_resolvent_rejects_bad_input(box, packet):
    with pytest.raises(ValueError):
        x_resolvent(packet, 1.0 - 1j)
    with pytest.raises(ValueError):
        x_resolvent(packet, 1j, form="other")


@pytest.mark.parametrize("form", ["cauchy", "difference"])
def test_x_resolvent_of_soliton_approaches_closed_form(form):
    errs = []
    for length, n in ((200.0, 4096), (400.0, 8192)):
        g = make_grid(n, length)
        z = 2j
        xr = x_resolvent(soliton(1.0, 0.0, g), z, form)
        exact = (soliton_line(1.0, 0.0, g.x) - np.sqrt(2) / 3j) / (g.x - z)
        errs.append(np.max(np.abs(xr.samples - exact)[np.abs(g.x) < 20]))
    assert errs[1] < 0.6 * errs[0]
    assert errs[1] < 1e-2


def test_cauchy_identity(box):
    rng = np.random.default_rng(1)
    for i in range(20):
        f = random_field(box, 100 + i, n_packets=int(rng.integers(1, 4)))
        z = _random_z(rng)
        lhs = i_plus_spectral(x_resolvent(f, z)) / (2j * np.pi)
        assert abs(lhs - halfplane_eval(f, z)) < 1e-8 * max(1.0, abs(halfplane_eval(f, z)))


def test_resolvent_norm_bounds(box):
    rng = np.random.default_rng(2)
    for i in range(10):
        f = random_field(box, 200 + i)
        z = _random_z(rng)
        t = rng.uniform(-1, 1)
        assert x_resolvent(f, z).norm() <= f.norm() / z.imag * (1 + 1e-12)
        assert a0_apply(f, t, z).norm() <= f.norm() / z.imag * (1 + 1e-12)


def test_a0_at_time_zero(box, packet):
    z = 0.4 + 0.9j
    np.testing.assert_allclose(a0_apply(packet, 0.0, z).spectrum, x_resolvent(packet, z).spectrum)


@pytest.mark.parametrize("t, z", [(0.0, 0.3 + 1.0j), (0.7, -1.0 + 0.5j), (-0.4, 2.0 + 2.0j)])
def test_i_plus_limit_oracle(t, z):
    g = make_grid(8192, 1000.0)
    f = gaussian_packet(g, center=0.5, width=1.5, carrier=5.0)
    a = a0_apply(f, t, z)
    value, est = i_plus_limit(a)
    exact = cauchy_reduction(f, t, z)
    assert abs(value / (2j * np.pi) - exact) < 1e-6
    assert abs(value - i_plus_spectral(a)) <= 3 * est + 1e-12
    assert exact == pytest.approx(halfplane_eval(schrodinger_flow(f, t), z))


# --- resolvent state --------------------------------------------------------

def test_state_at_time_zero_is_x_resolvent(box, packet):
    z = 0.2 + 0.7j
    u = solve_resolvent_state(packet, 0.0, z, "focusing")
    np.testing.assert_allclose(u.spectrum, x_resolvent(packet, z).spectrum, atol=1e-12)


def test_state_of_zero_field(box):
    zero = HardyField(box, np.zeros(box.n_modes))
    assert solve_resolvent_state(zero, 0.5, 1j, "defocusing").norm() == 0.0


@pytest.mark.parametrize("sign", ["focusing", "defocusing"])
def test_state_fixed_point_and_bound(box, packet, sign):
    z = 0.5 + 1.0j
    u = solve_resolvent_state(packet, 0.5, z, sign)
    assert fixed_point_residual(packet, u, 0.5, z, sign) < 1e-9
    assert u.norm() <= 1.05 * packet.norm() / z.imag


def test_neumann_oracle_at_large_height(box, packet):
    t, z = 0.5, 0.5 + 8.0j
    partial, tnorm = neumann_partial_sum(packet, t, z, "focusing", terms=3)
    assert tnorm < 0.5
    u = solve_resolvent_state(packet, t, z, "focusing")
    tail = tnorm ** 3 / (1 - tnorm) * a0_apply(packet, t, z).norm()
    assert (partial - u).norm() <= tail


def test_solver_failure_is_reported(box, packet):
    plan = ExplicitEvalPlan(t=1.0, sign="focusing", max_iter=1, restart=1, continuation=False)
    with pytest.raises(SolverError) as info:
        solve_batch(packet, [0.1 + 0.1j, 1.0 + 0.1j], plan)
    assert info.value.indices is not None and len(info.value.indices) >= 1


def test_plan_validation():
    with pytest.raises(ValueError):
        ExplicitEvalPlan(t=1.0, sign="focusing", tol=0.0)
    with pytest.raises(ValueError):
        ExplicitEvalPlan(t=1.0, sign="focusing", restart=0)


# --- values ---------------------------------------------------------------

def test_value_at_time_zero(box, packet):
    z = -1.0 + 0.6j
    assert explicit_value(packet, 0.0, z, "defocusing") == pytest.approx(halfplane_eval(packet, z),
                                                                          abs=1e-12)


@pytest.mark.parametrize("t", [0.25, 1.0])
def test_soliton_value_follows_box_soliton(t):
    # the box soliton translates at -2 pi / L; the residual gap is O(t / L^2)
    errs = []
    z = 0.3 + 0.8j
    for length, n in ((200.0, 2048), (400.0, 4096)):
        g = make_grid(n, length)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            val = explicit_value(soliton(1.0, 0.0, g), t, z, "focusing")
        errs.append(abs(val - halfplane_eval(soliton(1.0, soliton_speed(g) * t, g), z)))
    assert errs[1] < 1e-4
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.2)


def test_gaussian_value_matches_stepper():
    g = make_grid(2048, 100.0)
    q0 = gaussian_packet(g, center=-1.0, width=1.5, target_mass=3.0)
    t, b = 0.5, 1.0
    xs = np.linspace(-10, 10, 33)
    line = explicit_line(q0, t, b, "defocusing", x=xs)
    report = compare_line(line, evolve_field(q0, "defocusing", t, 1e-3))
    assert report["sup_error"] < 1e-4
    assert report["max_residual"] <= 1e-10


def test_line_at_time_zero(box, packet):
    line = explicit_line(packet, 0.0, 0.7, "focusing")
    np.testing.assert_allclose(line.values, poisson_semigroup(packet, 0.7).samples, atol=1e-13)


def test_line_mass_decreases_with_height():
    g = make_grid(512, 50.0)
    q0 = random_field(g, 4, target_mass=2.0, spread=3.0)
    masses = []
    for b in (0.5, 1.0, 2.0):
        line = explicit_line(q0, 0.3, b, "defocusing")
        masses.append(np.sum(np.abs(line.values) ** 2) * g.dx)
    assert masses[0] > masses[1] > masses[2]


def test_line_rejects_nonpositive_height(box, packet):
    with pytest.raises(ValueError):
        explicit_line(packet, 0.5, 0.0, "focusing")


def test_comparison_report_shape():
    g = make_grid(512, 50.0)
    q0 = random_field(g, 5, target_mass=1.0, spread=3.0)
    line = explicit_line(q0, 0.2, 1.0, "defocusing")
    rep = compare_line(line, evolve_field(q0, "defocusing", 0.2, 1e-3))
    assert set(rep) == {"b", "sup_error", "l2_error", "solver_iterations_histogram",
                        "ladder_depth", "max_residual", "outside_hypotheses"}
    d = json.loads(comparison_json(0.2, rep))
    assert d["t"] == 0.2 and d["b"] == 1.0
