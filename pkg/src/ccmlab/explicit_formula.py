"""Explicit solution formula evaluated through resolvents, independent of the stepper.

For ``Im z > 0`` the solution at time ``t`` is recovered from the initial data as

    q(t, z) = [S(t) q0](z) +- 2t [S(t)(q0 C+(conj(q0) u))](z),
    u = A0 q0 +- 2t A0 (q0 C+(conj(q0) u)),

where ``S(t)`` is the free Schrodinger group (multiplier ``exp(-i t xi^2)``) and
``A0 = S(-t) (X - z)^-1 S(t)``. The second line is a linear system for
``u = A(t, z; q0) q0``, solved by GMRES. Each ``I+`` of a resolvent output is
replaced by the Cauchy reduction ``(2 pi i)^-1 I+(A0 g) = [S(t) g](z)``.

The inner ``C+`` of the two-sided product ``conj(q0) u`` uses half weight on the
zero mode. That is the endpoint rule of the half-line inversion integral, and it
removes an O(1/L) bias against whole-line solutions.
"""

from __future__ import annotations

import json
import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .hardy_grid import (
    SQRT_2PI,
    HardyField,
    check_same_grid,
    full_transform,
    halfplane_eval,
    halfplane_eval_rows,
    poisson_semigroup,
    project_padded,
    schrodinger_flow,
    synthesize,
)
from .observables import SOLITON_MASS, Sign, mass

#: Zero-mode weight of the inner projection (see module docstring).
LINE_ZERO_WEIGHT = 0.5


class SolverError(RuntimeError):
    """GMRES (with continuation) did not certify the requested residual."""

    def __init__(self, message, residuals=None, indices=None):
        super().__init__(message)
        self.residuals = residuals
        self.indices = indices


@dataclass
class ExplicitEvalPlan:
    t: float
    sign: Sign
    tol: float = 1e-10
    max_iter: int = 400
    restart: int = 40
    batch_size: int = 64
    continuation: bool = True
    zero_weight: float = LINE_ZERO_WEIGHT

    def __post_init__(self):
        self.sign = Sign.parse(self.sign)
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1 or self.restart < 1 or self.batch_size < 1:
            raise ValueError("max_iter, restart and batch_size must be >= 1")

    def to_dict(self) -> dict:
        return {"t": self.t, "sign": str(self.sign), "tol": self.tol, "max_iter": self.max_iter,
                "restart": self.restart, "batch_size": self.batch_size,
                "continuation": self.continuation, "zero_weight": self.zero_weight}


def _check_z(z):
    z = np.asarray(z, dtype=np.complex128)
    if np.any(~np.isfinite(z)) or np.any(z.imag <= 0):
        raise ValueError("resolvent points need finite z with Im z > 0")
    return z


# ---------------------------------------------------------------------------
# X resolvent and its Schrodinger conjugate

def _xres_spec(grid, spec: np.ndarray, z: np.ndarray) -> np.ndarray:
    # C+[f / (x - z)]; 1/(x - z) is anti-Hardy, so this equals (f - f(z)) / (x - z)
    f = synthesize(grid, spec)
    vals = f / (grid.x - z[..., None])
    coef = full_transform(grid, vals)[..., : grid.n_modes]
    return coef


def x_resolvent(f: HardyField, z: complex, form: str = "cauchy") -> HardyField:
    """``(X - z)^-1 f``, i.e. ``(f(x) - f(z)) / (x - z)``, for ``Im z > 0``.

    ``form="cauchy"`` projects ``f / (x - z)``. For localized ``f`` that product
    decays like ``f`` itself, so the periodic box sees no truncation. Its zero
    coefficient is the grid quadrature of the Cauchy integral.
    ``form="difference"`` projects samples of ``(f - f(z)) / (x - z)``. That is
    the same function on the line, but its ``1/x`` tail is felt by the box.
    """
    z = complex(_check_z(z))
    grid = f.grid
    if form == "cauchy":
        return HardyField(grid, _xres_spec(grid, f.spectrum, np.asarray(z)))
    if form == "difference":
        fz = halfplane_eval(f, z)
        vals = (f.samples - fz) / (grid.x - z)
        return HardyField(grid, full_transform(grid, vals)[: grid.n_modes])
    raise ValueError(f"unknown form {form!r}")


def _flow(grid, spec, t):
    return np.exp(-1j * t * grid.xi ** 2) * spec


def _a0_spec(grid, spec, t, z):
    return _flow(grid, _xres_spec(grid, _flow(grid, spec, t), z), -t)


def a0_apply(f: HardyField, t: float, z: complex) -> HardyField:
    """``S(-t) (X - z)^-1 S(t) f``."""
    z = _check_z(z)
    return HardyField(f.grid, _a0_spec(f.grid, f.spectrum, t, z))


# ---------------------------------------------------------------------------
# I+ : production reduction and test oracles

def i_plus_spectral(g: HardyField) -> complex:
    """``sqrt(2 pi) g^(0+)`` read from the zero coefficient.

    Valid when the zero coefficient holds the right limit of ``g^``, which is
    the case for :func:`x_resolvent` output in ``cauchy`` form.
    """
    return complex(SQRT_2PI * g.spectrum[0])


def i_plus_limit(g: HardyField, ys=(10.0, 14.0, 20.0, 28.0, 40.0)) -> tuple[complex, float]:
    """``lim 2 pi y g(iy)`` by extrapolation over the heights ``ys``.

    ``2 pi y g(iy)`` is a trapezoid sum over the ladder of ``g^(xi) e^(-xi y)``;
    its leading Euler-Maclaurin error ``(dxi^2/12)(y^2 g^(0) - y g^'(0))`` shares
    coefficients with the ``1/y`` expansion, so the fit uses the columns
    ``1 + e y^2``, ``1/y - e y``, ``1/y^2``, ... with ``e = dxi^2 / 12``.
    Returns the extrapolated value and an error estimate (difference between the
    full and the one-order-lower fit). Needs ``max(ys) << L``.
    """
    ys = np.asarray(ys, dtype=float)
    # trapezoid endpoint: a full zero mode would add I pi y / L to 2 pi y g(iy)
    half = g.with_spectrum(np.concatenate([[0.5 * g.spectrum[0]], g.spectrum[1:]]))
    vals = np.array([2.0 * np.pi * y * halfplane_eval(half, 1j * y) for y in ys])
    e = g.grid.dxi ** 2 / 12.0
    cols = [1.0 + e * ys ** 2, 1.0 / ys - e * ys]
    cols += [ys ** -p for p in range(2, len(ys))]
    v = np.stack(cols[: len(ys)], axis=1)
    coef = np.linalg.solve(v, vals)
    lower = np.linalg.lstsq(v[:, :-1], vals, rcond=None)[0]
    return complex(coef[0]), float(abs(coef[0] - lower[0]))


def cauchy_reduction(g: HardyField, t: float, z: complex) -> complex:
    """``(2 pi i)^-1 I+(A0(t, z) g) = [S(t) g](z)``."""
    return halfplane_eval(schrodinger_flow(g, t), z)


# ---------------------------------------------------------------------------
# linear solve

def _toeplitz_rows(grid, q_pad: np.ndarray, u: np.ndarray, zero_weight: float) -> np.ndarray:
    # q0 C+(conj(q0) u), batched over rows of u
    u_pad = synthesize(grid, u, pad=2)
    h = project_padded(grid, np.conj(q_pad) * u_pad, zero_weight=zero_weight)
    return project_padded(grid, q_pad * synthesize(grid, h, pad=2))


class _System:
    """Rows ``b`` of ``u - (+-2t) A0(z_b) T u = A0(z_b) f_b``."""

    def __init__(self, q0: HardyField, plan: ExplicitEvalPlan):
        self.grid = q0.grid
        self.q0 = q0
        self.q_pad = q0.padded_samples()
        self.plan = plan
        self.coupling = plan.sign.value * 2.0 * plan.t

    def toeplitz(self, u):
        return _toeplitz_rows(self.grid, self.q_pad, u, self.plan.zero_weight)

    def a0(self, spec, z):
        return _a0_spec(self.grid, spec, self.plan.t, z)

    def apply(self, u, z):
        if self.coupling == 0:
            return u
        return u - self.coupling * self.a0(self.toeplitz(u), z)

    def rhs(self, f, z):
        return self.a0(np.broadcast_to(f, (len(z), f.shape[-1])), z)


def batched_gmres(apply, b: np.ndarray, x0: np.ndarray | None = None, tol: float = 1e-10,
                  restart: int = 40, max_iter: int = 400, norm_ref: np.ndarray | None = None):
    """Restarted GMRES run in lockstep on the rows of ``b``.

    ``apply`` maps an ``(m, n)`` block to ``(m, n)`` for any subset of rows; it is
    called with the row indices as its second argument. Convergence is declared
    per row when the true residual is at most ``tol * norm_ref`` (default ``|b|``).

    Returns ``(x, residual, iterations)`` with per-row arrays.
    """
    nb, n = b.shape
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.complex128)
    ref = np.linalg.norm(b, axis=1) if norm_ref is None else np.asarray(norm_ref, float)
    ref = np.where(ref > 0, ref, 1.0)
    iters = np.zeros(nb, dtype=int)
    all_rows = np.arange(nb)
    r = b - apply(x, all_rows)
    res = np.linalg.norm(r, axis=1)
    active = res > tol * ref
    while active.any():
        rows = all_rows[active & (iters < max_iter)]
        if rows.size == 0:
            break
        m = restart
        k = rows.size
        V = np.zeros((k, m + 1, n), dtype=np.complex128)
        H = np.zeros((k, m + 1, m), dtype=np.complex128)
        cs = np.zeros((k, m))
        sn = np.zeros((k, m), dtype=np.complex128)
        g = np.zeros((k, m + 1), dtype=np.complex128)
        beta = res[rows]
        V[:, 0] = r[rows] / beta[:, None]
        g[:, 0] = beta
        steps = np.full(k, m)
        done = np.zeros(k, dtype=bool)
        target = tol * ref[rows]
        for j in range(m):
            w = apply(V[:, j], rows)
            for _ in range(2):  # classical Gram-Schmidt, applied twice
                h = np.einsum("kin,kn->ki", V[:, : j + 1].conj(), w)
                w = w - np.einsum("ki,kin->kn", h, V[:, : j + 1])
                H[:, : j + 1, j] += h
            hn = np.linalg.norm(w, axis=1)
            H[:, j + 1, j] = hn
            safe = np.where(hn > 0, hn, 1.0)
            V[:, j + 1] = np.where((hn > 0)[:, None], w / safe[:, None], 0.0)
            for i in range(j):
                t1 = cs[:, i] * H[:, i, j] + sn[:, i] * H[:, i + 1, j]
                H[:, i + 1, j] = -np.conj(sn[:, i]) * H[:, i, j] + cs[:, i] * H[:, i + 1, j]
                H[:, i, j] = t1
            a = H[:, j, j]
            bb = H[:, j + 1, j].real
            rho = np.hypot(np.abs(a), bb)
            rho_safe = np.where(rho > 0, rho, 1.0)
            absa = np.abs(a)
            phase = np.where(absa > 0, a / np.where(absa > 0, absa, 1.0), 1.0)
            cs[:, j] = np.where(rho > 0, absa / rho_safe, 1.0)
            sn[:, j] = np.where(rho > 0, phase * bb / rho_safe, 0.0)
            H[:, j, j] = phase * rho
            H[:, j + 1, j] = 0.0
            g[:, j + 1] = -np.conj(sn[:, j]) * g[:, j]
            g[:, j] = cs[:, j] * g[:, j]
            est = np.abs(g[:, j + 1])
            newly = ~done & ((est <= 0.5 * target) | (hn == 0))
            steps[newly] = j + 1
            done |= newly
            iters[rows[~done | newly]] += 1
            if done.all():
                break
        # rows keep only their own steps; pad the triangular systems with identity
        kmax = int(steps.max())
        R = H[:, :kmax, :kmax].copy()
        rhs = g[:, :kmax].copy()
        for idx in np.nonzero(steps < kmax)[0]:
            s_ = steps[idx]
            R[idx, s_:, :] = 0.0
            R[idx, :, s_:] = 0.0
            R[idx, s_:, s_:] = np.eye(kmax - s_)
            rhs[idx, s_:] = 0.0
        diag = np.abs(np.diagonal(R, axis1=1, axis2=2))
        bad = (diag == 0).any(axis=1)
        if bad.any():
            R[bad] += np.eye(kmax) * (diag[bad] == 0)[:, None, :]
        y = np.linalg.solve(R, rhs[..., None])[..., 0]
        x[rows] += np.einsum("ki,kin->kn", y, V[:, :kmax])
        r[rows] = b[rows] - apply(x[rows], rows)
        res[rows] = np.linalg.norm(r[rows], axis=1)
        active = res > tol * ref
    return x, res / ref, iters


@dataclass
class SolveResult:
    u: np.ndarray                 # (nz, n_modes)
    toeplitz_u: np.ndarray        # q0 C+(conj(q0) u), reused by the evaluation
    residual: np.ndarray          # certified ||u - RHS(u)|| / ||f||
    iterations: np.ndarray
    ladder_depth: np.ndarray
    outside_hypotheses: bool = False
    failed: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


def coupling_height(q0: HardyField, t: float) -> float:
    """Height ``b0`` with ``||2t A0 q0 C+ conj(q0)|| <= 1/2`` for ``Im z >= b0``.

    Uses ``||A0|| <= 1 / Im z`` and ``||q0 C+ conj(q0)|| <= sup |q0|^2``.
    """
    return 4.0 * abs(t) * float(np.max(np.abs(q0.padded_samples())) ** 2)


def solve_batch(q0: HardyField, z, plan: ExplicitEvalPlan, f: HardyField | None = None,
                strict: bool = True) -> SolveResult:
    """Solve for ``u_b = A(t, z_b; q0) f`` at every ``z_b``.

    Rows that do not converge directly are restarted on a ladder of heights
    ``b0, b0/2, ...`` down to ``Im z_b``, each level warm-started from the one
    above (``plan.continuation``).
    """
    z = np.atleast_1d(_check_z(z))
    f = q0 if f is None else f
    check_same_grid(q0, f)
    outside = plan.sign is Sign.FOCUSING and mass(q0) >= SOLITON_MASS
    if outside:
        warnings.warn("focusing data with mass >= 2*pi: explicit formula evaluated outside "
                      "the below-threshold hypotheses", stacklevel=2)
    system = _System(q0, plan)
    fnorm = max(f.norm(), 1e-300)
    nz, n = z.size, q0.grid.n_modes
    u = np.zeros((nz, n), dtype=np.complex128)
    res = np.zeros(nz)
    iters = np.zeros(nz, dtype=int)
    depth = np.zeros(nz, dtype=int)
    for s in range(0, nz, plan.batch_size):
        sl = slice(s, min(nz, s + plan.batch_size))
        zb = z[sl]
        b = system.rhs(f.spectrum, zb)
        # coefficient 2-norms are L^2 norms divided by sqrt(dxi)
        ref = np.full(zb.size, fnorm / np.sqrt(q0.grid.dxi))
        ub, rb, ib = batched_gmres(lambda x, rows: system.apply(x, zb[rows]), b,
                                   tol=plan.tol, restart=plan.restart,
                                   max_iter=plan.max_iter, norm_ref=ref)
        fail = np.nonzero(rb > plan.tol)[0]
        if fail.size and plan.continuation:
            b0 = max(coupling_height(q0, plan.t), float(zb.imag.max()))
            for idx in fail:
                uu, rr, it, dd = _continuation(system, f, zb[idx], b0, plan, ref[idx])
                ub[idx], rb[idx], ib[idx] = uu, rr, ib[idx] + it
                depth[s + idx] = dd
        u[sl], res[sl], iters[sl] = ub, rb, ib
    failed = np.nonzero(res > plan.tol)[0]
    if failed.size and strict:
        raise SolverError(
            f"resolvent solve not certified at {failed.size} of {nz} points; worst residual "
            f"{res.max():.3e} (tol {plan.tol:.1e}) at z={z[np.argmax(res)]!r}",
            residuals=res, indices=failed)
    return SolveResult(u, system.toeplitz(u), res, iters, depth, outside, failed)


def _continuation(system: _System, f: HardyField, z: complex, b0: float,
                  plan: ExplicitEvalPlan, ref: float):
    heights = []
    b = max(b0, z.imag)
    while b > z.imag * (1 + 1e-12):
        heights.append(b)
        b *= 0.5
    heights.append(z.imag)
    guess = None
    total = 0
    for h in heights:
        zz = np.array([complex(z.real, h)])
        rhs = system.rhs(f.spectrum, zz)
        x, r, it = batched_gmres(lambda x, rows: system.apply(x, zz[rows]), rhs, x0=guess,
                                 tol=plan.tol, restart=plan.restart,
                                 max_iter=plan.max_iter, norm_ref=np.array([ref]))
        guess = x
        total += int(it[0])
    return x[0], float(r[0]), total, len(heights) - 1


def solve_resolvent_state(q0: HardyField, t: float, z: complex, sign: Sign,
                          plan: ExplicitEvalPlan | None = None,
                          f: HardyField | None = None) -> HardyField:
    """``u = A(t, z; q0) f`` (default ``f = q0``) with a certified residual."""
    plan = plan or ExplicitEvalPlan(t=t, sign=sign)
    plan = _with(plan, t, sign)
    out = solve_batch(q0, [z], plan, f=f)
    return HardyField(q0.grid, out.u[0])


def fixed_point_residual(q0: HardyField, u: HardyField, t: float, z: complex, sign: Sign,
                         f: HardyField | None = None,
                         zero_weight: float = LINE_ZERO_WEIGHT) -> float:
    """``||u - A0 f -+ 2t A0(q0 C+(conj(q0) u))|| / ||f||`` recomputed from scratch."""
    f = q0 if f is None else f
    plan = ExplicitEvalPlan(t=t, sign=sign, zero_weight=zero_weight)
    system = _System(q0, plan)
    zz = np.array([complex(z)])
    r = system.rhs(f.spectrum, zz)[0] - system.apply(u.spectrum[None, :], zz)[0]
    return float(np.sqrt(np.sum(np.abs(r) ** 2) * q0.grid.dxi) / max(f.norm(), 1e-300))


def neumann_partial_sum(q0: HardyField, t: float, z: complex, sign: Sign, terms: int = 3,
                        zero_weight: float = LINE_ZERO_WEIGHT) -> tuple[HardyField, float]:
    """``sum_{j < terms} T^j A0 q0`` with ``T = +-2t A0 q0 C+ conj(q0)``, and ``||T||``.

    The operator norm is estimated by power iteration on ``T* T``.
    """
    plan = ExplicitEvalPlan(t=t, sign=sign, zero_weight=zero_weight)
    system = _System(q0, plan)
    zz = np.array([complex(z)])
    term = system.rhs(q0.spectrum, zz)
    total = term.copy()
    for _ in range(terms - 1):
        term = system.coupling * system.a0(system.toeplitz(term), zz)
        total += term
    rng = np.random.default_rng(0)
    v = rng.standard_normal(q0.grid.n_modes) + 1j * rng.standard_normal(q0.grid.n_modes)
    v = v[None] / np.linalg.norm(v)
    zc = np.conj(zz)
    est = 0.0
    for _ in range(200):
        w = system.coupling * system.a0(system.toeplitz(v), zz)
        # T* = conj(c) G A0*, and A0* is A0 with z replaced by conj(z)
        w = np.conj(system.coupling) * system.toeplitz(system.a0(w, zc))
        est_new = float(np.sqrt(np.linalg.norm(w)))
        v = w / max(np.linalg.norm(w), 1e-300)
        if abs(est_new - est) <= 1e-10 * max(est_new, 1e-300):
            est = est_new
            break
        est = est_new
    return HardyField(q0.grid, total[0]), est


def _with(plan: ExplicitEvalPlan, t, sign) -> ExplicitEvalPlan:
    if plan.t == t and plan.sign is Sign.parse(sign):
        return plan
    d = plan.to_dict()
    d.update(t=t, sign=sign)
    return ExplicitEvalPlan(**d)


# ---------------------------------------------------------------------------
# evaluation

def _values(q0: HardyField, z: np.ndarray, sol: SolveResult, plan: ExplicitEvalPlan):
    grid = q0.grid
    free = halfplane_eval(schrodinger_flow(q0, plan.t), z)
    corr = halfplane_eval_rows(grid, _flow(grid, sol.toeplitz_u, plan.t), z)
    return free + plan.sign.value * 2.0 * plan.t * corr


def explicit_value(q0: HardyField, t: float, z: complex, sign: Sign,
                   plan: ExplicitEvalPlan | None = None) -> complex:
    """``q(t, z)`` for ``Im z > 0`` from the initial data alone."""
    plan = _with(plan or ExplicitEvalPlan(t=t, sign=sign), t, sign)
    z = np.atleast_1d(_check_z(z))
    if plan.t == 0:
        return complex(halfplane_eval(q0, z[0]))
    sol = solve_batch(q0, z, plan)
    return complex(_values(q0, z, sol, plan)[0])


@dataclass
class LineResult:
    x: np.ndarray
    b: float
    values: np.ndarray
    iterations: np.ndarray
    ladder_depth: np.ndarray
    residual: np.ndarray
    outside_hypotheses: bool


def explicit_line(q0: HardyField, t: float, b: float, sign: Sign,
                  plan: ExplicitEvalPlan | None = None, x=None) -> LineResult:
    """``q(t, x_j + ib)`` at every grid abscissa (or at ``x`` if given).

    One linear solve per abscissa; the solves run in lockstep batches of
    ``plan.batch_size`` rows.
    """
    if not b > 0:
        raise ValueError("line height b must be positive")
    plan = _with(plan or ExplicitEvalPlan(t=t, sign=sign), t, sign)
    xs = q0.grid.x if x is None else np.asarray(x, dtype=float)
    z = xs + 1j * b
    if plan.t == 0:
        vals = halfplane_eval(q0, z)
        zeros = np.zeros(xs.size, dtype=int)
        return LineResult(xs, b, vals, zeros, zeros, np.zeros(xs.size), False)
    sol = solve_batch(q0, z, plan)
    return LineResult(xs, b, _values(q0, z, sol, plan), sol.iterations, sol.ladder_depth,
                      sol.residual, sol.outside_hypotheses)


# ---------------------------------------------------------------------------
# comparison against a stepped solution

def compare_line(line: LineResult, q_t: HardyField) -> dict:
    """Discrepancy between ``line`` and the Poisson-smoothed field ``q_t``."""
    ref = poisson_semigroup(q_t, line.b)
    if line.x.shape == q_t.grid.x.shape and np.array_equal(line.x, q_t.grid.x):
        target = ref.samples
    else:
        target = halfplane_eval(q_t, line.x + 1j * line.b)
    diff = line.values - target
    dx = q_t.grid.dx
    hist = Counter(int(i) for i in line.iterations)
    return {
        "b": line.b,
        "sup_error": float(np.max(np.abs(diff))),
        "l2_error": float(np.sqrt(np.sum(np.abs(diff) ** 2) * dx)),
        "solver_iterations_histogram": {str(k): v for k, v in sorted(hist.items())},
        "ladder_depth": int(np.max(line.ladder_depth)) if line.ladder_depth.size else 0,
        "max_residual": float(np.max(line.residual)) if line.residual.size else 0.0,
        "outside_hypotheses": bool(line.outside_hypotheses),
    }


def comparison_json(t: float, report: dict) -> str:
    d = {"t": t}
    d.update(report)
    return json.dumps(d, sort_keys=True)
