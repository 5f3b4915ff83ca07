"""Solitons, conserved functionals, and the Toeplitz building block ``q C+(conj(q) f)``."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np

from .hardy_grid import (
    Grid,
    HardyField,
    check_same_grid,
    cplus_conj_product,
    hardy_leakage,
    multiply_project,
    project_padded,
    synthesize,
    szego_project,
)


class Sign(enum.Enum):
    """Upper sign of the equation is focusing; ``value`` is that sign as +-1."""

    FOCUSING = 1
    DEFOCUSING = -1

    @classmethod
    def parse(cls, text) -> "Sign":
        if isinstance(text, Sign):
            return text
        key = str(text).strip().lower()
        if key in ("focusing", "+", "+1", "1"):
            return cls.FOCUSING
        if key in ("defocusing", "-", "-1"):
            return cls.DEFOCUSING
        raise ValueError(f"unknown sign {text!r}; use 'focusing' or 'defocusing'")

    def __str__(self):
        return self.name.lower()


# ---------------------------------------------------------------------------
# solitons

SOLITON_MASS = 2.0 * np.pi

#: Sampled solitons are rejected if their anti-Hardy energy exceeds this fraction.
SOLITON_LEAKAGE_TOL = 1e-10


class SolitonLeakageError(ValueError):
    """Sampling the whole-line soliton leaked too much energy off the Hardy ladder."""


def soliton_line(lam: float, x0: float, z):
    """Whole-line soliton ``sqrt(lam) sqrt(2) / (lam z + x0 + i)`` at real or complex ``z``."""
    z = np.asarray(z, dtype=np.complex128)
    return np.sqrt(2.0 * lam) / (lam * z + x0 + 1j)


def soliton(lam: float, x0: float, grid: Grid, construction: str = "periodic") -> HardyField:
    """Focusing soliton with scale ``lam`` and shift ``x0``.

    ``construction="periodic"`` (default) builds the periodic-box counterpart

        q(x) = sqrt(2 pi / L) a w / (1 - r w),  w = exp(2 pi i (x - c) / L),

    with ``r = exp(-2 pi / (lam L))``, ``a = -i sqrt(1 - r^2)``, ``c = -x0/lam``. It
    is exactly Hardy, has mass exactly ``2 pi``, satisfies ``q' = i q C+(|q|^2)``
    on the box, and converges to the whole-line profile as ``L`` grows.

    ``construction="sampled"`` samples the whole-line profile and projects. Its
    periodization leaks O(1/L) energy to negative frequencies; the call raises
    :class:`SolitonLeakageError` when that leakage exceeds ``1e-10`` of the mass.
    """
    if not lam > 0:
        raise ValueError(f"soliton scale must be positive, got {lam}")
    if construction == "periodic":
        L = grid.domain_length
        r = np.exp(-2.0 * np.pi / (lam * L))
        a = -1j * np.sqrt(-np.expm1(-4.0 * np.pi / (lam * L)))
        k = np.arange(grid.n_modes)
        c = -x0 / lam
        spec = np.zeros(grid.n_modes, dtype=np.complex128)
        spec[1:] = np.sqrt(L) * a * r ** (k[1:] - 1) * np.exp(-1j * grid.xi[1:] * c)
        return HardyField(grid, spec)
    if construction == "sampled":
        vals = soliton_line(lam, x0, grid.x)
        leak = hardy_leakage(grid, vals)
        if leak > SOLITON_LEAKAGE_TOL:
            raise SolitonLeakageError(
                f"sampled soliton leaks {leak:.2e} of its mass off the Hardy ladder "
                f"(limit {SOLITON_LEAKAGE_TOL:.0e}) at n={grid.n_points}, L={grid.domain_length}")
        return szego_project(grid, vals)
    raise ValueError(f"unknown soliton construction {construction!r}")


def soliton_speed(grid: Grid) -> float:
    """Signed velocity of the periodic soliton under the focusing flow on the box.

    The profile translates rigidly toward negative ``x``: ``q(t) = soliton(lam, x0 + v t)``
    with ``v = -2 pi / L``, independent of ``lam``.
    """
    return -2.0 * np.pi / grid.domain_length


# ---------------------------------------------------------------------------
# Toeplitz term

def toeplitz_apply(q: HardyField, f: HardyField, zero_weight: float = 1.0) -> HardyField:
    """``q C+(conj(q) f)`` with 2x zero-padded products.

    ``zero_weight`` scales the zero mode kept by the inner projection (1 is the
    exact box projector, 0.5 the whole-line endpoint rule).
    """
    check_same_grid(q, f)
    return multiply_project(q, cplus_conj_product(q, f, zero_weight))


def cplus_abs2_padded(q: HardyField, zero_weight: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Padded samples of ``q`` and of ``C+(|q|^2)``."""
    qq = q.padded_samples()
    h = project_padded(q.grid, np.abs(qq) ** 2, zero_weight=zero_weight)
    return qq, synthesize(q.grid, h, pad=2)


# ---------------------------------------------------------------------------
# functionals

def mass(q: HardyField) -> float:
    return float(np.sum(np.abs(q.spectrum) ** 2) * q.grid.dxi)


def momentum(q: HardyField, sign: Sign) -> float:
    """``int -i conj(q) q' -+ |q|^4 / 2``; the upper sign is focusing."""
    s = Sign.parse(sign).value
    kinetic = np.sum(q.grid.xi * np.abs(q.spectrum) ** 2) * q.grid.dxi
    # |q|^4 has modes |k| < n, so the 2n-point sum integrates it exactly
    quartic = np.sum(np.abs(q.padded_samples()) ** 4) * (q.grid.dx / 2)
    return float(kinetic - s * 0.5 * quartic)


def hamiltonian(q: HardyField, sign: Sign, zero_weight: float = 1.0) -> float:
    """``(1/2) int |q' -+ i q C+(|q|^2)|^2``; the upper sign is focusing."""
    s = Sign.parse(sign).value
    qq, c = cplus_abs2_padded(q, zero_weight)
    dq = synthesize(q.grid, 1j * q.grid.xi * q.spectrum, pad=2)
    integrand = np.abs(dq - s * 1j * qq * c) ** 2
    return float(0.5 * np.sum(integrand) * (q.grid.dx / 2))


def tail_mass(q: HardyField, kappa: float) -> float:
    """Mass carried by frequencies ``xi >= kappa``."""
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    sel = q.grid.xi >= kappa
    return float(np.sum(np.abs(q.spectrum[sel]) ** 2) * q.grid.dxi)


@dataclass(frozen=True)
class ObservableSet:
    mass: float
    momentum: float
    hamiltonian: float
    tails: dict = field(default_factory=dict)

    def to_dict(self, t: float | None = None) -> dict:
        out = {} if t is None else {"t": t}
        out.update(mass=self.mass, momentum=self.momentum, hamiltonian=self.hamiltonian,
                   tails={repr(float(k)): v for k, v in self.tails.items()})
        return out

    def to_json(self, t: float | None = None) -> str:
        return json.dumps(self.to_dict(t), sort_keys=True)


def observables(q: HardyField, sign: Sign, tail_kappas=()) -> ObservableSet:
    return ObservableSet(
        mass=mass(q),
        momentum=momentum(q, sign),
        hamiltonian=hamiltonian(q, sign),
        tails={float(k): tail_mass(q, k) for k in tail_kappas},
    )
