"""Sectioned key-value run configuration with strict key checking."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

def _floats(text: str) -> tuple:
    parts = [p for p in text.replace(",", " ").split() if p]
    return tuple(float(p) for p in parts)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _choice(*options):
    def parse(text: str) -> str:
        t = text.strip().lower()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return t
    return parse


#: section -> key -> (parser, default)
SCHEMA = {
    "grid": {
        "n_points": (int, 4096),
        "domain_length": (float, 100.0),
    },
    "data": {
        "kind": (_choice("soliton", "file", "random", "gaussian"), "soliton"),
        "lam": (float, 1.0),
        "x0": (float, 0.0),
        "construction": (_choice("periodic", "sampled"), "periodic"),
        "path": (str, ""),
        "seed": (int, 0),
        "decay": (float, 2.0),
        "n_packets": (int, 4),
        "amplitude": (float, 1.0),
        "carrier_excess": (float, 3.0),
        "target_mass": (float, 0.0),
        "center": (float, 0.0),
        "width": (float, 2.0),
        "carrier": (float, 0.0),
    },
    "run": {
        "sign": (_choice("focusing", "defocusing"), "focusing"),
        "dt": (float, 1e-3),
        "t_final": (float, 1.0),
        "record_stride": (int, 100),
        "kappas": (_floats, ()),
        "tail_kappas": (_floats, ()),
        "mass_tol": (float, 1e-10),
        "momentum_tol": (float, 1e-8),
        "hamiltonian_tol": (float, 1e-8),
        "beta_tol": (float, 1e-6),
        "dump_fields": (_bool, True),
    },
    "compare": {
        "times": (_floats, (0.5,)),
        "heights": (_floats, (1.0,)),
        "bound": (float, 1e-4),
        "tol": (float, 1e-10),
        "max_iter": (int, 400),
        "restart": (int, 40),
        "batch_size": (int, 64),
        "attribution_check": (_bool, True),
    },
    "spectral": {
        "mode": (_choice("field", "trajectory"), "field"),
        "kappas": (_floats, (1.0, 2.0, 4.0, 8.0, 16.0)),
        "margin": (float, 1.0),
    },
    "output": {
        "directory": (str, "ccm-out"),
        "prefix": (str, "run"),
    },
}


class ConfigError(ValueError):
    """Malformed or unknown configuration entry; ``where`` names line and key."""

    def __init__(self, message: str, where: str = ""):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


@dataclass
class RunConfig:
    """Parsed configuration: ``values[section][key]`` fully populated with defaults."""

    values: dict
    source: str = ""
    overrides: list = field(default_factory=list)

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def to_dict(self) -> dict:
        out = {}
        for sec, kv in self.values.items():
            out[sec] = {k: list(v) if isinstance(v, tuple) else v for k, v in kv.items()}
        return out


def _parse_value(section: str, key: str, text: str, where: str):
    if section not in SCHEMA:
        raise ConfigError(f"unknown section [{section}]", where)
    if key not in SCHEMA[section]:
        raise ConfigError(f"unknown key {section}.{key}", where)
    parser, _ = SCHEMA[section][key]
    try:
        return parser(text.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {section}.{key}: {exc}", where) from None


def _key_lines(text: str) -> dict:
    # configparser drops line numbers; recover them for diagnostics
    lines, section = {}, None
    for no, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
            lines.setdefault((section, None), no)
        elif section and s and not s.startswith(("#", ";")) and ("=" in s or ":" in s):
            key = s.split("=", 1)[0].split(":", 1)[0].strip().lower()
            lines[(section, key)] = no
    return lines


def parse_config(text: str, overrides=(), source: str = "<string>") -> RunConfig:
    """Parse ``text`` and apply ``section.key=value`` overrides (applied last)."""
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(str(exc).splitlines()[0], f"{source}:{line}" if line else source) from None
    lines = _key_lines(text)
    values = {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]", f"{source}:{lines.get((sec, None), '?')}")
        for key, text_value in cp.items(sec):
            where = f"{source}:{lines.get((sec, key), '?')}"
            values[sec][key] = _parse_value(sec, key, text_value, where)
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError("override must look like section.key=value", f"--set {item}")
        lhs, rhs = item.split("=", 1)
        sec, key = (part.strip() for part in lhs.split(".", 1))
        key = key.lower()
        value = _parse_value(sec, key, rhs, f"--set {item}")
        values[sec][key] = value
    cfg = RunConfig(values, source, list(overrides))
    _validate(cfg)
    return cfg


def load_config(path: str, overrides=()) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    return parse_config(text, overrides, source=str(path))


def _validate(cfg: RunConfig) -> None:
    g, d, r, c = cfg["grid"], cfg["data"], cfg["run"], cfg["compare"]
    checks = [
        (g["n_points"] >= 8 and g["n_points"] % 2 == 0, "grid.n_points", "must be even and >= 8"),
        (g["domain_length"] > 0, "grid.domain_length", "must be positive"),
        (r["dt"] > 0, "run.dt", "must be positive"),
        (r["record_stride"] >= 1, "run.record_stride", "must be >= 1"),
        (d["kind"] != "file" or bool(d["path"]), "data.path", "required when data.kind = file"),
        (d["lam"] > 0, "data.lam", "must be positive"),
        (all(b > 0 for b in c["heights"]), "compare.heights", "must be positive"),
        (c["bound"] > 0, "compare.bound", "must be positive"),
        (all(k > 0 for k in cfg["spectral"]["kappas"]), "spectral.kappas", "must be positive"),
    ]
    for ok, key, msg in checks:
        if not ok:
            raise ConfigError(msg, key)
