"""``ccm simulate|compare|spectral --config <path> [--set section.key=value]...``

Exit codes: 0 ok, 1 config or input data, 2 drift or discrepancy above bound,
3 blowup, 4 resolvent solver failure, 5 spectral failure.
"""

from __future__ import annotations

import os

# single-threaded BLAS keeps reductions in a fixed order, so reports are byte-stable
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import argparse  # noqa: E402
import hashlib  # noqa: E402
import io  # noqa: E402
import json  # noqa: E402
import sys  # noqa: E402
import tempfile  # noqa: E402
import time  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402

from . import __version__  # noqa: E402
from .config import ConfigError, RunConfig, load_config  # noqa: E402
from .evolve import (BLOWUP_MASS_DRIFT, EvolutionConfig, evolve, evolve_field,  # noqa: E402
                     relative_l2, trajectory_lines)
from .explicit_formula import (ExplicitEvalPlan, SolverError, compare_line,  # noqa: E402
                               explicit_line)
from .hardy_grid import dump_csv, load_csv, make_grid, poisson_semigroup  # noqa: E402
from .initial_data import gaussian_packet, random_field  # noqa: E402
from .lax_spectral import SpectralError, spectral_report  # noqa: E402
from .observables import Sign, SolitonLeakageError, mass, soliton, soliton_speed  # noqa: E402

EXIT_OK, EXIT_CONFIG, EXIT_DRIFT, EXIT_BLOWUP, EXIT_SOLVER, EXIT_SPECTRAL = range(6)


class DataError(ValueError):
    """Initial data could not be built from the configuration."""


# ---------------------------------------------------------------------------
# output plumbing

class Outputs:
    """Atomic writer that remembers every artifact for the manifest."""

    def __init__(self, cfg: RunConfig, command: str):
        self.dir = Path(cfg["output"]["directory"])
        self.prefix = cfg["output"]["prefix"]
        self.cfg = cfg
        self.command = command
        self.files: list[Path] = []
        self.started = time.time()

    def path(self, suffix: str) -> Path:
        return self.dir / f"{self.prefix}.{suffix}"

    def write(self, suffix: str, text: str, track: bool = True) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        target = self.path(suffix)
        fd, tmp = tempfile.mkstemp(dir=self.dir, prefix=f".{target.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        if track:
            self.files.append(target)
        return target

    def header(self) -> dict:
        return {"command": self.command, "config": self.cfg.to_dict(), "version": __version__}

    def finish(self, exit_code: int) -> None:
        entries = []
        for p in self.files:
            data = p.read_bytes()
            entries.append({"name": p.name, "bytes": len(data),
                            "sha256": hashlib.sha256(data).hexdigest()})
        manifest = dict(self.header(), exit_code=exit_code, files=entries,
                        sidecar=self.path("timestamps.json").name)
        self.write("manifest.json", dumps(manifest), track=False)
        stamps = {"started_unix": self.started, "finished_unix": time.time(),
                  "started_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(self.started))}
        self.write("timestamps.json", dumps(stamps), track=False)


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def field_csv(f) -> str:
    buf = io.StringIO()
    dump_csv(f, buf)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# initial data

def build_initial(cfg: RunConfig):
    g, d = cfg["grid"], cfg["data"]
    grid = make_grid(g["n_points"], g["domain_length"])
    kind = d["kind"]
    target = d["target_mass"] or None
    if kind == "soliton":
        try:
            return soliton(d["lam"], d["x0"], grid, construction=d["construction"])
        except SolitonLeakageError as exc:
            raise DataError(str(exc)) from None
    if kind == "random":
        return random_field(grid, d["seed"], n_packets=d["n_packets"], decay=d["decay"],
                            amplitude=d["amplitude"], target_mass=target,
                            carrier_excess=d["carrier_excess"])
    if kind == "gaussian":
        return gaussian_packet(grid, center=d["center"], width=d["width"],
                               carrier=d["carrier"] or None, target_mass=target)
    try:
        q = load_csv(d["path"])
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot load {d['path']}: {exc}") from None
    if q.grid != grid:
        raise DataError(f"{d['path']} holds grid {q.grid.to_dict()}, config asks for {grid.to_dict()}")
    return q


def _evolution_config(cfg: RunConfig, kappas=None) -> EvolutionConfig:
    r = cfg["run"]
    return EvolutionConfig(
        sign=r["sign"], dt=r["dt"], t_final=r["t_final"], record_stride=r["record_stride"],
        kappas=r["kappas"] if kappas is None else kappas, tail_kappas=r["tail_kappas"],
        mass_tol=r["mass_tol"], momentum_tol=r["momentum_tol"],
        hamiltonian_tol=r["hamiltonian_tol"], beta_tol=r["beta_tol"])


def _status_code(traj) -> int:
    return {"ok": EXIT_OK, "drift": EXIT_DRIFT, "blowup": EXIT_BLOWUP}[traj.status]


# ---------------------------------------------------------------------------
# commands

def run_simulate(cfg: RunConfig) -> int:
    out = Outputs(cfg, "simulate")
    q0 = build_initial(cfg)
    ec = _evolution_config(cfg)
    traj = evolve(q0, ec)
    refs = {}
    if cfg["run"]["dump_fields"]:
        for i, rec in enumerate(traj):
            refs[i] = out.write(f"field_{i:04d}.csv", field_csv(rec.field)).name
    lines = trajectory_lines(traj, ec, header_extra=out.header(), field_refs=refs)
    out.write("trajectory.jsonl", "\n".join(lines) + "\n")
    keys = sorted({k for rec in traj for k in rec.drifts})
    table = [{"t": rec.t, **{k: rec.drifts.get(k, 0.0) for k in keys}} for rec in traj]
    report = dict(out.header(), status=traj.status, message=traj.message,
                  experimental=traj.experimental, conservation=table,
                  max_drift={k: traj.max_drift(k) for k in keys},
                  final_time=traj[-1].t, final_vs_initial_l2=relative_l2(traj[-1].field, q0))
    d = cfg["data"]
    if d["kind"] == "soliton":
        # the box soliton translates rigidly; this separates transport from shape error
        moved = soliton(d["lam"], d["x0"] + soliton_speed(q0.grid) * traj[-1].t, q0.grid,
                        construction=d["construction"])
        report["final_vs_comoving_soliton_l2"] = relative_l2(traj[-1].field, moved)
    code = _status_code(traj)
    report["exit_code"] = code
    out.write("report.json", dumps(report))
    out.finish(code)
    if traj.message:
        print(traj.message, file=sys.stderr)
    return code


def run_compare(cfg: RunConfig) -> int:
    out = Outputs(cfg, "compare")
    q0 = build_initial(cfg)
    r, c = cfg["run"], cfg["compare"]
    sign = Sign.parse(r["sign"])
    m0 = mass(q0)
    rows, failures, code = [], [], EXIT_OK
    q, t_now = q0, 0.0
    for t in sorted(set(c["times"])):
        if t != t_now:
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    q = evolve_field(q, sign, t - t_now, r["dt"])
            except FloatingPointError:
                rows.append({"t": t, "status": "blowup"})
                code = EXIT_BLOWUP
                break
            t_now = t
        if abs(mass(q) - m0) > BLOWUP_MASS_DRIFT * max(m0, 1e-300):
            rows.append({"t": t, "status": "blowup"})
            code = EXIT_BLOWUP
            break
        for b in c["heights"]:
            plan = ExplicitEvalPlan(t=t, sign=sign, tol=c["tol"], max_iter=c["max_iter"],
                                    restart=c["restart"], batch_size=c["batch_size"])
            try:
                line = explicit_line(q0, t, b, sign, plan)
            except SolverError as exc:
                idx = [] if exc.indices is None else [int(i) for i in exc.indices]
                xs = [float(q0.grid.x[i]) for i in idx]
                failures.extend({"t": t, "x": x, "b": b} for x in xs)
                rows.append({"t": t, "b": b, "status": "solver_failure", "message": str(exc),
                             "failed_x": xs})
                continue
            row = dict(compare_line(line, q), t=t, status="ok")
            if row["sup_error"] > c["bound"]:
                row["status"] = "above_bound"
                if c["attribution_check"]:
                    row["attribution"] = _attribute(q0, q, t, b, r["dt"], sign, row["sup_error"])
            rows.append(row)
    if code != EXIT_BLOWUP:
        if failures:
            code = EXIT_SOLVER
        elif any(row["status"] == "above_bound" for row in rows):
            code = EXIT_DRIFT
    report = dict(out.header(), comparisons=rows, solver_failures=failures, exit_code=code,
                  bound=c["bound"])
    out.write("compare.json", dumps(report))
    out.finish(code)
    for f in failures:
        print(f"solver failure at t={f['t']!r} x={f['x']!r} b={f['b']!r}", file=sys.stderr)
    for row in rows:
        if row["status"] == "above_bound":
            att = row.get("attribution", {}).get("source", "unattributed")
            print(f"t={row['t']!r} b={row['b']!r}: sup discrepancy {row['sup_error']:.3e} above "
                  f"bound {c['bound']:.1e} ({att})", file=sys.stderr)
    return code


def _attribute(q0, q_t, t, b, dt, sign, sup_error) -> dict:
    # rerun the stepper at dt/2: if that moves the line by most of the gap, blame the time step
    q_half = evolve_field(q0, sign, t, dt / 2)
    shift = float(np.max(np.abs(poisson_semigroup(q_t, b).samples
                                - poisson_semigroup(q_half, b).samples)))
    source = "time_step" if shift >= 0.5 * sup_error else "explicit_formula_or_truncation"
    return {"source": source, "stepper_shift_at_half_dt": shift}


def run_spectral(cfg: RunConfig) -> int:
    out = Outputs(cfg, "spectral")
    q0 = build_initial(cfg)
    s = cfg["spectral"]
    sign = Sign.parse(cfg["run"]["sign"])
    code = EXIT_OK
    try:
        report = dict(out.header(), initial=spectral_report(q0, sign, s["kappas"], s["margin"]))
        if s["mode"] == "trajectory":
            traj = evolve(q0, _evolution_config(cfg, kappas=s["kappas"]))
            table = []
            for rec in traj:
                table.append({"t": rec.t,
                              "beta": {repr(k): v for k, v in rec.beta_samples.items()},
                              "drift": {repr(k): rec.drifts.get(f"beta[{k!r}]", 0.0)
                                        for k in rec.beta_samples}})
            if any(not np.isfinite(v) for rec in traj for v in rec.beta_samples.values()):
                raise SpectralError("beta could not be evaluated along the trajectory")
            report["beta_drift_table"] = table
            report["max_beta_drift"] = {repr(k): traj.max_drift(f"beta[{k!r}]") for k in s["kappas"]}
            report["trajectory_status"] = traj.status
            code = _status_code(traj)
    except (SpectralError, np.linalg.LinAlgError) as exc:
        report = dict(out.header(), error=str(exc))
        code = EXIT_SPECTRAL
        print(f"spectral failure: {exc}", file=sys.stderr)
    report["exit_code"] = code
    out.write("spectral.json", dumps(report))
    out.finish(code)
    return code


COMMANDS = {"simulate": run_simulate, "compare": run_compare, "spectral": run_spectral}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage errors are configuration errors, not drift
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ccm", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="sectioned key=value file")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="SECTION.KEY=VALUE", help="override one entry; repeatable")
    p.add_argument("--version", action="version", version=f"ccm {__version__}")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
        return COMMANDS[args.command](cfg)
    except (ConfigError, DataError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
