"""Integrating-factor RK4 time stepping with conservation monitoring."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .hardy_grid import HardyField, check_same_grid, project_padded, synthesize
from .lax_spectral import SpectralError, beta, beta_quadratic, lax_matrix
from .observables import SOLITON_MASS, ObservableSet, Sign, mass, observables

#: Relative mass change beyond which a run is treated as blown up. Coarse but
#: stable steps drift by well under this; unstable ones grow without bound.
BLOWUP_MASS_DRIFT = 0.1


def _nonlinear(grid, spec: np.ndarray, s: int) -> np.ndarray:
    # 2 s C+( q d/dx C+(|q|^2) ), products on the 2x grid
    q = synthesize(grid, spec, pad=2)
    h = project_padded(grid, np.abs(q) ** 2)
    dh = synthesize(grid, 1j * grid.xi * h, pad=2)
    return 2.0 * s * project_padded(grid, q * dh)


def p_apply(q: HardyField, f: HardyField, sign: Sign) -> HardyField:
    """``P f = i f'' +- 2 q d/dx C+(conj(q) f)`` (upper sign focusing)."""
    grid = check_same_grid(q, f)
    s = Sign.parse(sign).value
    qq = q.padded_samples()
    h = project_padded(grid, np.conj(qq) * f.padded_samples())
    dh = synthesize(grid, 1j * grid.xi * h, pad=2)
    nl = 2.0 * s * project_padded(grid, qq * dh)
    return HardyField(grid, -1j * grid.xi ** 2 * f.spectrum + nl)


def ccm_rhs(q: HardyField, sign: Sign) -> HardyField:
    """``dq/dt = i q'' +- 2 q d/dx C+(|q|^2)``."""
    s = Sign.parse(sign).value
    grid = q.grid
    return HardyField(grid, -1j * grid.xi ** 2 * q.spectrum + _nonlinear(grid, q.spectrum, s))


def _if_rk4(grid, c: np.ndarray, h: float, s: int) -> np.ndarray:
    # interaction picture: v = exp(i t xi^2) c, classical RK4 on v
    e2 = np.exp(-0.5j * h * grid.xi ** 2)
    e = e2 * e2
    k1 = _nonlinear(grid, c, s)
    k2 = _nonlinear(grid, e2 * (c + 0.5 * h * k1), s)
    k3 = _nonlinear(grid, e2 * c + 0.5 * h * k2, s)
    k4 = _nonlinear(grid, e * c + h * (e2 * k3), s)
    return e * c + (h / 6.0) * (e * k1 + 2.0 * e2 * (k2 + k3) + k4)


@dataclass
class EvolutionConfig:
    sign: Sign
    dt: float = 1e-3
    t_final: float = 1.0
    record_stride: int = 100
    kappas: tuple = ()
    tail_kappas: tuple = ()
    mass_tol: float = 1e-10
    momentum_tol: float = 1e-8
    hamiltonian_tol: float = 1e-8
    beta_tol: float = 1e-6

    def __post_init__(self):
        self.sign = Sign.parse(self.sign)
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if int(self.record_stride) < 1:
            raise ValueError("record_stride must be >= 1")
        self.record_stride = int(self.record_stride)
        for name in ("mass_tol", "momentum_tol", "hamiltonian_tol", "beta_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        self.kappas = tuple(float(k) for k in self.kappas)
        self.tail_kappas = tuple(float(k) for k in self.tail_kappas)

    def steps(self) -> tuple[int, float]:
        """Number of steps and the uniform step that lands exactly on ``t_final``."""
        n = max(1, math.ceil(abs(self.t_final) / self.dt - 1e-9))
        return n, self.t_final / n

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sign"] = str(self.sign)
        d["kappas"] = list(self.kappas)
        d["tail_kappas"] = list(self.tail_kappas)
        return d


def step(q: HardyField, config: EvolutionConfig, h: float | None = None) -> HardyField:
    """One integrating-factor RK4 step of size ``h`` (default ``config.dt``)."""
    h = config.dt if h is None else h
    out = _if_rk4(q.grid, q.spectrum, h, config.sign.value)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite values after time step")
    return HardyField(q.grid, out)


def evolve_field(q0: HardyField, sign: Sign, t: float, dt: float) -> HardyField:
    """Advance ``q0`` to time ``t`` with no monitoring."""
    s = Sign.parse(sign).value
    n = max(1, math.ceil(abs(t) / dt - 1e-9))
    h = t / n
    c = q0.spectrum
    for _ in range(n):
        c = _if_rk4(q0.grid, c, h, s)
    if not np.all(np.isfinite(c)):
        raise FloatingPointError("non-finite values during evolution")
    return HardyField(q0.grid, c)


@dataclass
class EvolutionRecord:
    t: float
    field: HardyField
    observables: ObservableSet
    beta_samples: dict = field(default_factory=dict)
    drifts: dict = field(default_factory=dict)
    flagged: bool = False

    def to_dict(self) -> dict:
        d = self.observables.to_dict(self.t)
        d["beta"] = {repr(k): v for k, v in self.beta_samples.items()}
        d["drifts"] = self.drifts
        d["flagged"] = self.flagged
        return d


class Trajectory(list):
    """List of :class:`EvolutionRecord` plus run status.

    ``status`` is ``"ok"``, ``"drift"`` (some record exceeded a tolerance) or
    ``"blowup"`` (aborted; the last record is the last good state).
    """

    def __init__(self, records=(), status="ok", message="", experimental=False):
        super().__init__(records)
        self.status = status
        self.message = message
        self.experimental = experimental

    def max_drift(self, key: str) -> float:
        vals = [r.drifts.get(key, 0.0) for r in self]
        return max(vals) if vals else 0.0


def _drift(now: float, ref: float, scale: float | None = None) -> float:
    # relative unless the reference vanishes (e.g. H of a soliton)
    scale = abs(ref) if scale is None else scale
    return abs(now - ref) / scale if scale > 1e-12 else abs(now - ref)


def _betas(q: HardyField, config: EvolutionConfig) -> dict:
    if not config.kappas:
        return {}
    lax = lax_matrix(q, config.sign)
    out = {}
    for k in config.kappas:
        try:
            out[k] = beta(lax, kappa=k)
        except SpectralError:
            out[k] = float("nan")
    return out


def beta_scale(q: HardyField, kappa: float, value: float) -> float:
    """Reference size for relative beta drift: ``max(|beta|, beta^[2])``.

    The focusing soliton has ``beta = 0`` exactly while its quadratic part does
    not vanish, so ``|beta|`` alone would turn round-off into a large relative drift.
    """
    return max(abs(value), beta_quadratic(q, kappa))


def _record(t, q, config, ref=None) -> EvolutionRecord:
    obs = observables(q, config.sign, config.tail_kappas)
    betas = _betas(q, config)
    rec = EvolutionRecord(t, q, obs, betas)
    if ref is not None:
        d = {
            "mass": _drift(obs.mass, ref.observables.mass),
            "momentum": _drift(obs.momentum, ref.observables.momentum),
            "hamiltonian": _drift(obs.hamiltonian, ref.observables.hamiltonian),
        }
        for k, v in betas.items():
            b0 = ref.beta_samples[k]
            d[f"beta[{k!r}]"] = _drift(v, b0, beta_scale(ref.field, k, b0))
        rec.drifts = d
        tol = {"mass": config.mass_tol, "momentum": config.momentum_tol,
               "hamiltonian": config.hamiltonian_tol}
        rec.flagged = any(d[key] > tol.get(key, config.beta_tol) or not np.isfinite(d[key])
                          for key in d)
    return rec


def evolve(q0: HardyField, config: EvolutionConfig, on_record=None) -> Trajectory:
    """Integrate to ``config.t_final`` recording every ``record_stride`` steps and at the end."""
    experimental = config.sign is Sign.FOCUSING and mass(q0) >= SOLITON_MASS
    if experimental:
        warnings.warn(f"focusing data with mass {mass(q0):.6g} >= 2*pi: outside the "
                      "below-threshold regime; run marked experimental", stacklevel=2)
    n, h = config.steps()
    first = _record(0.0, q0, config)
    traj = Trajectory([first], experimental=experimental)
    if on_record:
        on_record(first)
    c = q0.spectrum
    s = config.sign.value
    m0 = first.observables.mass
    for i in range(1, n + 1):
        c_new = _if_rk4(q0.grid, c, h, s)
        m = float(np.sum(np.abs(c_new) ** 2) * q0.grid.dxi)
        if not np.all(np.isfinite(c_new)) or abs(m - m0) > BLOWUP_MASS_DRIFT * max(m0, 1e-300):
            traj.status = "blowup"
            traj.message = f"aborted at t={i * h:.6g}: non-finite field or mass drift beyond {BLOWUP_MASS_DRIFT:g}"
            last = traj[-1]
            if last.t != (i - 1) * h:
                traj.append(_record((i - 1) * h, HardyField(q0.grid, c), config, first))
            return traj
        c = c_new
        if i % config.record_stride == 0 or i == n:
            rec = _record(i * h if i < n else config.t_final, HardyField(q0.grid, c), config, first)
            traj.append(rec)
            if on_record:
                on_record(rec)
    flagged = [r.t for r in traj if r.flagged]
    if flagged:
        traj.status = "drift"
        traj.message = f"conservation drift beyond tolerance at t={flagged}"
    return traj


def relative_l2(a: HardyField, b: HardyField) -> float:
    check_same_grid(a, b)
    return float(np.linalg.norm(a.spectrum - b.spectrum) / np.linalg.norm(b.spectrum))


def trajectory_lines(traj: Trajectory, config: EvolutionConfig, header_extra=None,
                     field_refs=None) -> list[str]:
    """JSON-lines payload: a header echoing the run, then one line per record."""
    head = {"type": "header", "config": config.to_dict(), "status": traj.status,
            "message": traj.message, "experimental": traj.experimental}
    if header_extra:
        head.update(header_extra)
    lines = [json.dumps(head, sort_keys=True)]
    for i, rec in enumerate(traj):
        d = rec.to_dict()
        d["type"] = "record"
        if field_refs and i in field_refs:
            d["field"] = field_refs[i]
        lines.append(json.dumps(d, sort_keys=True))
    return lines
