"""Periodic grid, Hardy-space fields, and the linear spectral operations on them.

Conventions
-----------
The line is truncated to ``[-L/2, L/2)`` with ``n`` equispaced points
``x_j = -L/2 + j dx``. The Fourier transform is
``f^(xi) = (2 pi)^(-1/2) \\int e^{-i xi x} f(x) dx``, discretised as

    f^_k = dx / sqrt(2 pi) * sum_j f(x_j) exp(-i xi_k x_j),   xi_k = 2 pi k / L,

with inverse ``f(x_j) = sqrt(2 pi) / L * sum_k f^_k exp(i xi_k x_j)``. Discrete
norms then satisfy ``sum |f_j|^2 dx = sum |f^_k|^2 dxi``. A Hardy field keeps only
the ladder ``k = 0, ..., n/2 - 1``; the Nyquist mode is always dropped.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import kernels

SQRT_2PI = float(np.sqrt(2.0 * np.pi))

#: Relative anti-Hardy energy above which a field is not considered Hardy.
PROJECTION_TOL = 1e-12


class GridMismatchError(ValueError):
    """Two fields that must share a grid do not."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on ``[-L/2, L/2)``."""

    n_points: int
    domain_length: float

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points % 2 or self.n_points < 8:
            raise ValueError(f"n_points must be an even integer >= 8, got {self.n_points!r}")
        if not np.isfinite(self.domain_length) or self.domain_length <= 0:
            raise ValueError(f"domain_length must be positive, got {self.domain_length!r}")
        object.__setattr__(self, "n_points", int(self.n_points))
        object.__setattr__(self, "domain_length", float(self.domain_length))

    @property
    def n_modes(self) -> int:
        return self.n_points // 2

    @property
    def dx(self) -> float:
        return self.domain_length / self.n_points

    @property
    def dxi(self) -> float:
        return 2.0 * np.pi / self.domain_length

    @cached_property
    def x(self) -> np.ndarray:
        return _frozen(-0.5 * self.domain_length + self.dx * np.arange(self.n_points))

    @cached_property
    def xi(self) -> np.ndarray:
        """Hardy ladder ``xi_k``, ``k = 0, ..., n/2 - 1``."""
        return _frozen(self.dxi * np.arange(self.n_modes))

    @cached_property
    def xi_full(self) -> np.ndarray:
        """All frequencies in FFT order (negative mirror included)."""
        return _frozen(self.dxi * np.fft.fftfreq(self.n_points, 1.0 / self.n_points))

    @property
    def xi_max(self) -> float:
        return float(self.xi[-1])

    def padded(self, factor: int = 2) -> "Grid":
        """Same domain, ``factor`` times more points (used for dealiased products)."""
        return Grid(self.n_points * factor, self.domain_length)

    def to_dict(self) -> dict:
        return {"n_points": self.n_points, "domain_length": self.domain_length}


def make_grid(n_points: int, domain_length: float) -> Grid:
    return Grid(n_points, domain_length)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _alternating(n: int, m: int | None = None) -> np.ndarray:
    # exp(-i xi_k x_0) = (-1)^k because x_0 = -L/2
    k = np.arange(n) if m is None else np.fft.fftfreq(m, 1.0 / m).astype(np.int64)
    return np.where(k % 2 == 0, 1.0, -1.0)


# ---------------------------------------------------------------------------
# transforms

def full_transform(grid: Grid, samples: np.ndarray) -> np.ndarray:
    """Discrete Fourier coefficients of ``samples`` at ``grid.xi_full`` (last axis)."""
    samples = np.asarray(samples, dtype=np.complex128)
    if samples.shape[-1] != grid.n_points:
        raise GridMismatchError(f"expected {grid.n_points} samples, got {samples.shape}")
    return grid.dx / SQRT_2PI * _alternating(0, grid.n_points) * np.fft.fft(samples, axis=-1)


def synthesize(grid: Grid, spectrum: np.ndarray, pad: int = 1) -> np.ndarray:
    """Samples of the Hardy field with ``spectrum`` on the ``pad``-times refined grid.

    Leading axes of ``spectrum`` are treated as a batch.
    """
    spectrum = np.asarray(spectrum)
    m = grid.n_points * pad
    buf = np.zeros(spectrum.shape[:-1] + (m,), dtype=np.complex128)
    buf[..., : grid.n_modes] = _alternating(grid.n_modes) * spectrum
    return (SQRT_2PI / grid.domain_length * m) * np.fft.ifft(buf, axis=-1)


def project_padded(grid: Grid, values: np.ndarray, pad: int = 2,
                   zero_weight: float = 1.0) -> np.ndarray:
    """Hardy-ladder coefficients of samples given on the ``pad``-refined grid.

    ``zero_weight`` scales the ``xi = 0`` coefficient; 0.5 gives the endpoint
    weight of the half-line inversion integral (see :func:`szego_project`).
    """
    m = grid.n_points * pad
    values = np.asarray(values, dtype=np.complex128)
    if values.shape[-1] != m:
        raise GridMismatchError(f"expected {m} padded samples, got {values.shape}")
    coef = np.fft.fft(values, axis=-1)[..., : grid.n_modes]
    coef *= (grid.dx / pad) / SQRT_2PI * _alternating(grid.n_modes)
    if zero_weight != 1.0:
        coef[..., 0] *= zero_weight
    return coef


# ---------------------------------------------------------------------------
# fields

@dataclass(frozen=True, eq=False)
class HardyField:
    """A Hardy-space function stored by its nonnegative-frequency coefficients.

    ``spectrum[k]`` approximates ``f^(xi_k)``; ``samples`` are synthesized on
    demand, so the two views cannot drift apart.
    """

    grid: Grid
    spectrum: np.ndarray = field(repr=False)

    def __post_init__(self):
        spec = np.array(self.spectrum, dtype=np.complex128, copy=True)
        if spec.shape != (self.grid.n_modes,):
            raise GridMismatchError(
                f"spectrum needs {self.grid.n_modes} coefficients, got {spec.shape}")
        object.__setattr__(self, "spectrum", _frozen(spec))

    @classmethod
    def zeros(cls, grid: Grid) -> "HardyField":
        return cls(grid, np.zeros(grid.n_modes, dtype=np.complex128))

    @cached_property
    def samples(self) -> np.ndarray:
        return _frozen(synthesize(self.grid, self.spectrum))

    def padded_samples(self, pad: int = 2) -> np.ndarray:
        return synthesize(self.grid, self.spectrum, pad)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.spectrum) ** 2) * self.grid.dxi))

    def sample_norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.samples) ** 2) * self.grid.dx))

    def inner(self, other: "HardyField") -> complex:
        """``<self, other>`` conjugate-linear in ``self``."""
        check_same_grid(self, other)
        return complex(np.vdot(self.spectrum, other.spectrum) * self.grid.dxi)

    def derivative(self) -> "HardyField":
        return HardyField(self.grid, 1j * self.grid.xi * self.spectrum)

    def with_spectrum(self, spectrum: np.ndarray) -> "HardyField":
        return HardyField(self.grid, spectrum)

    def __add__(self, other):
        check_same_grid(self, other)
        return HardyField(self.grid, self.spectrum + other.spectrum)

    def __sub__(self, other):
        check_same_grid(self, other)
        return HardyField(self.grid, self.spectrum - other.spectrum)

    def __mul__(self, scalar):
        if isinstance(scalar, HardyField):
            raise TypeError("use the dealiased product helpers for field products")
        return HardyField(self.grid, complex(scalar) * self.spectrum)

    __rmul__ = __mul__

    def __neg__(self):
        return HardyField(self.grid, -self.spectrum)


def check_same_grid(*fields: HardyField) -> Grid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatchError(f"grid mismatch: {grid} vs {f.grid}")
    return grid


def from_samples(grid: Grid, samples: np.ndarray, tol: float | None = PROJECTION_TOL) -> HardyField:
    """Wrap samples that are already Hardy; raise if the anti-Hardy part exceeds ``tol``."""
    leak = hardy_leakage(grid, samples)
    if tol is not None and leak > tol:
        raise ValueError(f"samples are not Hardy: relative anti-Hardy energy {leak:.3e} > {tol:.1e}")
    return szego_project(grid, samples)


def hardy_leakage(grid: Grid, samples: np.ndarray) -> float:
    """Energy at negative frequencies and Nyquist, relative to the total."""
    full = full_transform(grid, samples)
    total = np.sum(np.abs(full) ** 2)
    if total == 0:
        return 0.0
    return float(np.sum(np.abs(full[grid.n_modes:]) ** 2) / total)


def szego_project(grid: Grid, samples: np.ndarray, line_endpoint: bool = False) -> HardyField:
    """Cauchy-Szego projection of grid samples.

    The default keeps ``xi_k`` for ``0 <= k < n/2`` with full weight, which is the
    exact orthogonal projector of the periodic grid (idempotent, self-adjoint).
    ``line_endpoint=True`` halves the zero mode. That is the trapezoid endpoint of
    the half-line inversion integral, and it reproduces ``(f + iHf)/2`` of the
    whole line with an O(dxi^2) rather than O(dxi) periodization error.
    """
    samples = np.asarray(samples, dtype=np.complex128)
    if not np.all(np.isfinite(samples)):
        raise ValueError("samples must be finite")
    spec = full_transform(grid, samples)[: grid.n_modes].copy()
    if line_endpoint:
        spec[0] *= 0.5
    return HardyField(grid, spec)


# ---------------------------------------------------------------------------
# upper half-plane

def halfplane_eval(f: HardyField, z):
    """Holomorphic extension ``f(z) = sqrt(2 pi)/L sum_k f^_k e^{i xi_k z}``, ``Im z > 0``.

    Accepts a scalar or an array of points; returns the same shape.
    """
    zarr = np.asarray(z, dtype=np.complex128)
    if np.any(~np.isfinite(zarr)) or np.any(zarr.imag <= 0):
        raise ValueError("halfplane_eval needs finite z with Im z > 0")
    grid = f.grid
    out = kernels.halfplane_sum(f.spectrum, zarr, grid.dxi) * (SQRT_2PI / grid.domain_length)
    return complex(out) if np.ndim(z) == 0 else out


def halfplane_eval_rows(grid: Grid, spectra: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Evaluate row ``b`` of ``spectra`` at ``z[b]`` (batched over distinct fields)."""
    z = np.asarray(z, dtype=np.complex128)
    if np.any(z.imag <= 0):
        raise ValueError("halfplane evaluation needs Im z > 0")
    return kernels.halfplane_sum(spectra, z, grid.dxi) * (SQRT_2PI / grid.domain_length)


def poisson_semigroup(f: HardyField, b: float) -> HardyField:
    """Multiplier ``exp(-b xi)``: samples become ``f(x + ib)``."""
    if b < 0:
        raise ValueError(f"Poisson parameter must be >= 0, got {b}")
    return HardyField(f.grid, np.exp(-b * f.grid.xi) * f.spectrum)


def schrodinger_flow(f: HardyField, t: float) -> HardyField:
    """Free Schrodinger group ``e^{it d^2/dx^2}``: multiplier ``exp(-i t xi^2)``."""
    return HardyField(f.grid, np.exp(-1j * t * f.grid.xi ** 2) * f.spectrum)


def sobolev_norm(f: HardyField, s: float) -> float:
    w = (f.grid.xi + 1.0) ** (2.0 * s)
    return float(np.sqrt(np.sum(w * np.abs(f.spectrum) ** 2) * f.grid.dxi))


def abs_derivative_half(f: HardyField) -> HardyField:
    """``|d|^(1/2) f``, i.e. multiplier ``sqrt(xi)`` on the Hardy ladder."""
    return HardyField(f.grid, np.sqrt(f.grid.xi) * f.spectrum)


# ---------------------------------------------------------------------------
# dealiased products

def cplus_conj_product(q: HardyField, f: HardyField, zero_weight: float = 1.0) -> HardyField:
    """``C+(conj(q) f)`` with 2x zero padding."""
    check_same_grid(q, f)
    prod = np.conj(q.padded_samples()) * f.padded_samples()
    return HardyField(q.grid, project_padded(q.grid, prod, zero_weight=zero_weight))


def multiply_project(q: HardyField, g: HardyField) -> HardyField:
    """``C+(q g)`` for Hardy ``q`` and ``g`` (the product is Hardy up to truncation)."""
    check_same_grid(q, g)
    prod = q.padded_samples() * g.padded_samples()
    return HardyField(q.grid, project_padded(q.grid, prod))


# ---------------------------------------------------------------------------
# CSV dump

_COLUMNS = ["x", "re_q", "im_q", "k", "xi", "re_qhat", "im_qhat"]


def dump_csv(f: HardyField, path_or_buffer) -> None:
    """Write physical and spectral columns; the first line names the grid."""
    g = f.grid
    own = isinstance(path_or_buffer, (str, bytes)) or hasattr(path_or_buffer, "__fspath__")
    fh = open(path_or_buffer, "w", newline="") if own else path_or_buffer
    try:
        fh.write(f"# n_points={g.n_points} domain_length={g.domain_length!r}\n")
        w = csv.writer(fh)
        w.writerow(_COLUMNS)
        s = f.samples
        for j in range(g.n_points):
            row = [repr(float(g.x[j])), repr(float(s[j].real)), repr(float(s[j].imag))]
            if j < g.n_modes:
                c = f.spectrum[j]
                row += [j, repr(float(g.xi[j])), repr(float(c.real)), repr(float(c.imag))]
            else:
                row += ["", "", "", ""]
            w.writerow(row)
    finally:
        if own:
            fh.close()


def load_csv(path_or_buffer) -> HardyField:
    """Inverse of :func:`dump_csv`; the spectral columns are authoritative."""
    own = isinstance(path_or_buffer, (str, bytes)) or hasattr(path_or_buffer, "__fspath__")
    fh = open(path_or_buffer, newline="") if own else path_or_buffer
    try:
        text = fh.read()
    finally:
        if own:
            fh.close()
    lines = io.StringIO(text)
    header = lines.readline()
    if not header.startswith("#"):
        raise ValueError("field CSV must start with a '# n_points=... domain_length=...' line")
    params = dict(tok.split("=", 1) for tok in header[1:].split())
    grid = Grid(int(params["n_points"]), float(params["domain_length"]))
    reader = csv.DictReader(lines)
    if reader.fieldnames != _COLUMNS:
        raise ValueError(f"unexpected CSV columns {reader.fieldnames}")
    spec = np.zeros(grid.n_modes, dtype=np.complex128)
    seen = 0
    for row in reader:
        if row["k"] != "":
            spec[int(row["k"])] = complex(float(row["re_qhat"]), float(row["im_qhat"]))
            seen += 1
    if seen != grid.n_modes:
        raise ValueError(f"expected {grid.n_modes} spectral rows, found {seen}")
    return HardyField(grid, spec)
