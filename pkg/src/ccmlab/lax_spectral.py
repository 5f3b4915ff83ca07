"""Lax operator ``-i d -+ q C+ conj(q)`` as a dense Hermitian matrix on the Hardy ladder.

Matrix convention
-----------------
The matrix acts on coefficient vectors ``f^_k`` and is the Galerkin matrix in the
orthonormal box basis ``exp(i xi_k x) / sqrt(L)``. Its entries are

    L[k, j] = xi_k delta_kj  -+  (dxi^2 / 2 pi) sum_{m >= 0} w_m q^_{k-m} conj(q^_{j-m}),

with ``w_m = 1`` except the zero-mode weight ``w_0``. The matrix trace is
therefore the operator trace of the truncated operator, with no extra weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla
from scipy.special import polygamma, zeta

from . import kernels
from .hardy_grid import Grid, HardyField
from .observables import Sign, mass


class SpectralError(RuntimeError):
    """Eigensolver or factorization failure, or a shift below the spectrum."""


def gram_matrix(q: HardyField, zero_weight: float = 1.0) -> np.ndarray:
    """Matrix of ``q C+ conj(q)`` on the ladder (positive semidefinite)."""
    g = kernels.toeplitz_gram(q.spectrum, zero_weight)
    g *= q.grid.dxi ** 2 / (2.0 * np.pi)
    return g


@dataclass(frozen=True, eq=False)
class LaxOperatorMatrix:
    grid: Grid
    sign: Sign
    entries: np.ndarray
    field: HardyField
    zero_weight: float = 1.0

    @property
    def mass(self) -> float:
        return mass(self.field)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        try:
            return sla.eigvalsh(self.entries, check_finite=False)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise SpectralError(f"eigensolver failed: {exc}") from exc

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def apply(self, f: HardyField) -> HardyField:
        return HardyField(self.grid, self.entries @ f.spectrum)

    def lambda_min(self) -> float:
        if "eigenvalues" in self.__dict__:
            return float(self.eigenvalues[0])
        try:
            w = sla.eigh(self.entries, eigvals_only=True, subset_by_index=[0, 0],
                         check_finite=False)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise SpectralError(f"eigensolver failed: {exc}") from exc
        return float(w[0])


def lax_matrix(q: HardyField, sign: Sign, zero_weight: float = 1.0) -> LaxOperatorMatrix:
    s = Sign.parse(sign)
    m = -s.value * gram_matrix(q, zero_weight)
    m[np.diag_indices_from(m)] += q.grid.xi
    return LaxOperatorMatrix(q.grid, s, m, q, zero_weight)


def _as_lax(q, sign) -> LaxOperatorMatrix:
    if isinstance(q, LaxOperatorMatrix):
        return q
    if sign is None:
        raise ValueError("sign is required when passing a field")
    return lax_matrix(q, sign)


def kappa0(q, sign: Sign | None = None, margin: float = 1.0) -> float:
    """Smallest shift with ``L_q + kappa >= margin`` on the ladder."""
    if margin <= 0:
        raise ValueError("margin must be positive")
    lam = _as_lax(q, sign).lambda_min()
    return float(max(margin, -lam + margin))


def free_tail(grid: Grid, kappa: float) -> float:
    """``sum_{k >= n/2} 1 / (xi_k + kappa)^2`` over the discarded ladder."""
    return float(polygamma(1, grid.n_modes + kappa / grid.dxi) / grid.dxi ** 2)


def tail_correction(lax: LaxOperatorMatrix, kappa: float) -> float:
    """First-order contribution of the discarded ladder to ``tr(R - R0)``.

    Far above the frequency content of ``q`` the diagonal of ``q C+ conj(q)``
    is ``M / L``, so this is ``+-(M / L) sum_{k >= n/2} (xi_k + kappa)^-2``.
    """
    return lax.sign.value * lax.mass / lax.grid.domain_length * free_tail(lax.grid, kappa)


def _lags(spectrum: np.ndarray, dxi: float, rel_cut: float = 1e-10):
    # V_d = dxi^2/(2 pi) sum_p q^_{p+d} conj(q^_p): entries of q C+ conj(q)
    # away from the bottom of the ladder, where G[k, j] = V_{k-j}
    K = spectrum.shape[0]
    a = np.fft.ifft(np.abs(np.fft.fft(spectrum, 2 * K)) ** 2)[:K]
    v = dxi ** 2 / (2.0 * np.pi) * a
    big = np.nonzero(np.abs(v) > rel_cut * np.abs(v[0]))[0]
    width = int(big[-1]) if big.size else 0
    d = np.arange(-width, width + 1)
    vals = np.where(d >= 0, v[np.abs(d)], np.conj(v[np.abs(d)]))
    return d, vals


def ladder_tail(lax: LaxOperatorMatrix, kappa: float, order: int = 3) -> float:
    """Contribution of the discarded ladder ``k >= n/2`` to ``tr(R - R0)``.

    Expands ``R = sum_p (+-1)^p R0 (G R0)^p`` and, for ``p <= order``, sums every
    index tuple that reaches past the ladder. Near and beyond the top the matrix
    of ``q C+ conj(q)`` is the Toeplitz matrix of the autocorrelation ``V_d``, so
    each lag tuple reduces to a Hurwitz zeta series in ``1 / (k + kappa/dxi)``.
    The neglected orders are ``O(xi_max^-(order + 1))``.
    """
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    grid = lax.grid
    sgn = lax.sign.value
    K, dxi = grid.n_modes, grid.dxi
    c = kappa / dxi
    total = tail_correction(lax, kappa)
    if order == 1 or lax.mass == 0:
        return total
    d, v = _lags(lax.field.spectrum, dxi)
    width = int(d[-1])
    # rows past K - width must already be stationary
    if 2 * width >= K:
        raise SpectralError(
            f"field spectrum spans {width} of {K} ladder modes; refine the grid before "
            "using the ladder tail")
    x0 = K + c
    ratio = width / (K - width + c)
    mmax = int(min(400, np.ceil(np.log(1e-17) / np.log(max(ratio, 1e-3))) + 1))
    m = np.arange(mmax + 1)
    starts = K - width + np.arange(width + 1)          # a = K + min(0, ...)
    # scaled Hurwitz table: Z[m, i] = zeta(m + s0, starts_i + c) * x0^(m + s0 - 1)
    def table(s0):
        return zeta(m[:, None] + s0, starts[None, :] + c) * x0 ** (m[:, None] + s0 - 1.0)

    eps = d / x0
    # second order: sum_e |V_e|^2 sum_{k >= a(e)} r_k^2 r_{k-e}
    z3 = table(3)
    a_idx = np.minimum(d, 0) + width
    powers = eps[None, :] ** m[:, None]
    s2 = np.sum(np.abs(v) ** 2 * np.einsum("me,me->e", powers, z3[:, a_idx]))
    total += s2 / (x0 ** 2 * dxi ** 3)
    if order == 2:
        return float(total)
    # third order: e1 = k - j, e2 = k - l, weight V_e1 V_(e2-e1) V_(-e2)
    z4 = table(4)
    s3 = 0.0
    for i1, e1 in enumerate(d):
        e12 = d - e1
        ok = np.abs(e12) <= width
        if not ok.any():
            continue
        e2 = d[ok]
        w = v[i1] * v[e12[ok] + width] * np.conj(v[ok])
        a_idx = np.minimum(np.minimum(e1, 0), np.minimum(e2, 0)) + width
        # h_m(e1, e2) = sum_{i+j=m} e1^i e2^j, scaled by x0^-m
        h = np.ones_like(e2, dtype=np.float64)
        acc = h * z4[0, a_idx]
        p1 = 1.0
        for mm in range(1, mmax + 1):
            p1 *= eps[i1]
            h = eps[ok] * h + p1
            acc = acc + h * z4[mm, a_idx]
        s3 += np.sum(w * acc)
    total += sgn * np.real(s3) / (x0 ** 3 * dxi ** 4)
    return float(total)


def _check_shift(lax: LaxOperatorMatrix, kappa: float, lam_min: float):
    if lam_min + kappa <= 0:
        raise SpectralError(
            f"L_q + kappa is not positive definite: kappa={kappa:g}, lambda_min={lam_min:.6g}")


def resolvent_trace_defect(q, sign: Sign | None = None, kappa: float = 1.0,
                           method: str = "eig", tail: bool = True) -> float:
    """``tr{(L_q + kappa)^-1 - (L_0 + kappa)^-1}``.

    ``method="eig"`` sums ``1/(lambda + kappa)`` over the eigenvalues, so one
    eigensolve serves every kappa. ``method="cholesky"`` inverts the factored
    matrix and sums the diagonal, an independent route. ``tail`` adds
    :func:`ladder_tail` for the ladder beyond the grid.
    """
    lax = _as_lax(q, sign)
    xi = lax.grid.xi
    free = np.sum(1.0 / (xi + kappa))
    if method == "eig":
        ev = lax.eigenvalues
        _check_shift(lax, kappa, ev[0])
        val = np.sum(1.0 / (ev + kappa)) - free
    elif method == "cholesky":
        a = lax.entries.copy()
        a[np.diag_indices_from(a)] += kappa
        c, info = sla.lapack.zpotrf(a, lower=True, clean=False)
        if info != 0:
            _check_shift(lax, kappa, lax.lambda_min())
            raise SpectralError(f"Cholesky factorization failed at kappa={kappa:g} (info={info})")
        inv, info = sla.lapack.zpotri(c, lower=True)
        if info != 0:
            raise SpectralError(f"inversion failed at kappa={kappa:g} (info={info})")
        val = np.sum(np.real(np.diag(inv))) - free
    else:
        raise ValueError(f"unknown method {method!r}")
    if tail:
        val += ladder_tail(lax, kappa)
    return float(val)


def beta(q, sign: Sign | None = None, kappa: float = 1.0, method: str = "eig",
         tail: bool = True) -> float:
    """``M(q) -+ 2 pi kappa tr{R(kappa, q) - R0(kappa)}``."""
    lax = _as_lax(q, sign)
    d = resolvent_trace_defect(lax, kappa=kappa, method=method, tail=tail)
    return float(lax.mass - lax.sign.value * 2.0 * np.pi * kappa * d)


def beta_quadratic(q: HardyField, kappa: float) -> float:
    """``int xi / (xi + kappa) |q^(xi)|^2 d xi`` as a ladder sum."""
    xi = q.grid.xi
    return float(np.sum(xi / (xi + kappa) * np.abs(q.spectrum) ** 2) * q.grid.dxi)


def beta_quadratic_lattice(q: HardyField, kappa: float, zero_weight: float = 1.0,
                           tail: bool = True) -> float:
    """Quadratic part of :func:`beta` computed on the ladder itself.

    Equals ``M - 2 pi kappa tr(R0 G R0)`` with ``G`` the matrix of
    ``q C+ conj(q)``; it differs from :func:`beta_quadratic` by the Riemann-sum
    error of the inner frequency integral.
    """
    grid = q.grid
    a = np.abs(q.spectrum) ** 2
    wts = 1.0 / (grid.xi + kappa) ** 2
    # diag(G)_k = dxi^2/(2 pi) sum_{j<=k} w a_j ; w applies to j = k
    diag = np.cumsum(a) - (1.0 - zero_weight) * a
    tr = grid.dxi ** 2 / (2.0 * np.pi) * np.sum(wts * diag)
    if tail:
        tr += mass(q) / grid.domain_length * free_tail(grid, kappa)
    return float(mass(q) - 2.0 * np.pi * kappa * tr)


def beta_remainder(q, sign: Sign | None = None, kappa: float = 1.0) -> float:
    """``-+ 2 pi kappa tr{R0 G R(kappa) G R0}`` assembled from dense matrices."""
    lax = _as_lax(q, sign)
    grid = lax.grid
    g = -lax.sign.value * (lax.entries - np.diag(grid.xi))
    r0 = 1.0 / (grid.xi + kappa)
    a = lax.entries.copy()
    a[np.diag_indices_from(a)] += kappa
    try:
        cf = sla.cho_factor(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SpectralError(f"L_q + kappa not positive definite at kappa={kappa:g}") from exc
    b = g * r0[None, :]              # G R0
    x = sla.cho_solve(cf, b, check_finite=False)   # R G R0
    # tr(R0 G R G R0) = sum_k r0_k (G R G R0)_kk
    t = np.einsum("k,kj,jk->", r0, g, x)
    return float(-lax.sign.value * 2.0 * np.pi * kappa * np.real(t))


def hs_norm_squared_matrix(q: HardyField, kappa: float, tail: bool = True) -> float:
    """``||R0(kappa) q||_HS^2`` as the Frobenius norm of the ladder matrix of ``R0 q``.

    Multiplication by ``q`` is the lower-triangular Toeplitz matrix with first
    column ``sqrt(2 pi)/L q^``; rows beyond the ladder are restored by the
    same mass tail as in :func:`tail_correction`.
    """
    grid = q.grid
    col = np.sqrt(2.0 * np.pi) / grid.domain_length * q.spectrum
    t = sla.toeplitz(col, np.zeros_like(col))
    b = t / (grid.xi + kappa)[:, None]
    val = float(np.sum(np.abs(b) ** 2))
    if tail:
        val += mass(q) / grid.domain_length * free_tail(grid, kappa)
    return val


def hs_norm_squared_formula(q: HardyField, kappa: float) -> float:
    """``(2 pi)^-1 int |q^|^2 / (xi + kappa) d xi`` as a ladder sum."""
    xi = q.grid.xi
    return float(np.sum(np.abs(q.spectrum) ** 2 / (xi + kappa)) * q.grid.dxi / (2.0 * np.pi))


def edge_guard(grid: Grid) -> float:
    return 10.0 * grid.dxi


@dataclass(frozen=True)
class BoundStates:
    bound_states: list
    edge_candidates: list


def bound_states(q, sign: Sign | None = None, guard: float | None = None) -> BoundStates:
    """Eigenvalues below ``-guard`` (default ``10 dxi``); those in ``[-guard, 0)`` are edge candidates."""
    lax = _as_lax(q, sign)
    guard = edge_guard(lax.grid) if guard is None else guard
    ev = lax.eigenvalues
    neg = ev[ev < 0]
    return BoundStates(
        bound_states=[float(v) for v in neg[neg < -guard]],
        edge_candidates=[float(v) for v in neg[neg >= -guard]],
    )


def kappa_ladder(kappa_max: float, kappa_min: float = 1.0) -> list:
    """Dyadic ladder ``kappa_min, 2 kappa_min, ...`` up to ``kappa_max``."""
    out, k = [], float(kappa_min)
    while k <= kappa_max * (1 + 1e-12):
        out.append(k)
        k *= 2.0
    return out


def spectral_report(q: HardyField, sign: Sign, kappas, margin: float = 1.0) -> dict:
    lax = lax_matrix(q, sign)
    bs = bound_states(lax)
    k0 = kappa0(lax, margin=margin)
    betas, beta2 = {}, {}
    for k in kappas:
        key = repr(float(k))
        betas[key] = beta(lax, kappa=k) if k >= k0 else None
        beta2[key] = beta_quadratic(q, k)
    return {
        "kappa0": k0,
        "bound_states": bs.bound_states,
        "edge_candidates": bs.edge_candidates,
        "beta": betas,
        "beta2": beta2,
    }


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True)
