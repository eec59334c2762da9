"""Run configuration: per-command parameter schemas, strict key=value files,
flag overrides."""

from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ConfigError

FORMAT_VERSION = "laplab-run/1"
OUTPUT_ROOT_ENV = "LAPLAB_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "laplab-runs"
REQUIRED = object()


@dataclass(frozen=True)
class Param:
    name: str
    kind: str                     # int, float, str, bool, floats, choice
    default: object = REQUIRED
    help: str = ""
    choices: tuple = ()

    @property
    def flag(self) -> str:
        return "--" + self.name.replace("_", "-")

    def describe(self) -> str:
        if self.default is REQUIRED:
            return f"{self.help} (required)"
        return f"{self.help} (default: {_render(self.default)})"


def _render(v) -> str:
    if isinstance(v, (list, tuple)):
        return ",".join(repr(x) for x in v) or "''"
    return repr(v) if isinstance(v, str) else str(v)


COMMON = [
    Param("seed", "int", 0, "64-bit RNG seed"),
    Param("out", "str", "", f"output directory (default: ${OUTPUT_ROOT_ENV}/<command>-<config hash>)"),
]

SCHEMAS: dict[str, list[Param]] = {
    "pg": [
        Param("init", "str", "1,0.1", "initial coefficients a_1,a_2,... or a PolyMap JSON file"),
        Param("rate", "choice", "injection", "source sign", ("injection", "suction")),
        Param("dt", "float", 1e-3, "time step"),
        Param("t_end", "float", 1.0, "final time"),
    ],
    "dbm": [
        Param("alpha", "float", REQUIRED, "growth exponent"),
        Param("sigma", "float", 0.0, "surface-tension regularization"),
        Param("modes", "int", 256, "boundary samples M (power of two)"),
        Param("dt", "float", 1e-3, "RK4 step"),
        Param("t_end", "float", 1.0, "final time"),
        Param("save_dt", "float", 0.1, "snapshot interval (0: every step)"),
        Param("init", "str", "1", "initial coefficients or a PolyMap JSON file"),
        Param("orientation", "choice", "interior", "map orientation for coefficient input",
              ("interior", "exterior")),
        Param("direction", "choice", "injection", "flow direction", ("injection", "suction")),
        Param("boundary_points", "int", 512, "points per boundary CSV"),
    ],
    "blockdla": [
        Param("N", "int", REQUIRED, "number of boundary segments"),
        Param("K", "int", REQUIRED, "blocks per step"),
        Param("epsilon", "float", REQUIRED, "block area"),
        Param("steps", "int", 100, "aggregation steps"),
        Param("init", "str", "1", "initial coefficients or a PolyMap JSON file"),
        Param("landing", "choice", "uniform", "landing law", ("uniform", "arclength")),
        Param("lengths", "choice", "arc", "segment length rule", ("arc", "midpoint")),
        Param("replicas", "int", 1, "independent replicas"),
        Param("modes", "int", 0, "boundary samples M (0: max(64, 4N) rounded to a power of two)"),
        Param("save_every", "int", 0, "snapshot interval in steps (0: final only)"),
        Param("dimension", "bool", False, "box-counting dimension of the snapshot boundaries"),
    ],
    "fekete": [
        Param("shape", "str", "circle", "circle, segment, or a JSON file of [x, y] pairs"),
        Param("n", "int", REQUIRED, "number of Fekete points"),
        Param("cloud", "int", 1024, "candidate points for circle/segment"),
        Param("radius", "float", 1.0, "circle radius / segment half-length"),
        Param("n_max", "int", 0, "largest n for the transfinite-diameter sequence (0: skip)"),
    ],
    "equilibrium": [
        Param("V", "str", REQUIRED, "external field, e.g. 'x^2'"),
        Param("t", "float", 1.0, "total mass"),
        Param("n", "int", 200, "atoms"),
        Param("support", "floats", (), "optional support constraint a,b"),
        Param("poly_n", "int", 0, "also report zeros of the orthogonal polynomial Q_n with N=n (0: skip)"),
    ],
    "weak": [
        Param("V", "str", REQUIRED, "external field V(x, y)"),
        Param("mu", "str", "", "CSV file with columns x,y,w (empty: no measure)"),
        Param("grid", "floats", (-2.0, 2.0, -2.0, 2.0, 201, 201), "xmin,xmax,ymin,ymax,nx,ny"),
        Param("svg", "bool", False, "also write frontier.svg"),
        Param("growth_steps", "int", 0, "DLA growth steps applied to mu before extraction"),
        Param("radius", "float", 4.0, "tracer release circle"),
        Param("dt", "float", 0.1, "mass added per growth step"),
        Param("noise", "float", 0.0, "Ito noise amplitude (0: deterministic)"),
        Param("tracers", "int", 1000, "tracers per growth step"),
    ],
    "nrm": [
        Param("t0", "float", 1.0, "area parameter"),
        Param("tk", "floats", (), "deformation parameters t_1,t_2,..."),
        Param("n", "int", REQUIRED, "eigenvalues"),
        Param("N", "float", REQUIRED, "matrix size scale"),
        Param("sweeps", "int", 2000, "Metropolis sweeps per chain"),
        Param("chains", "int", 8, "parallel chains"),
        Param("thin", "int", 1, "keep every thin-th sweep"),
        Param("burn", "int", -1, "burn-in sweeps (-1: sweeps/4)"),
        Param("bins", "int", 30, "histogram bins per axis"),
        Param("extent", "float", 1.5, "histogram half-width"),
    ],
    "compare": [
        Param("a", "str", REQUIRED, "trajectory JSON"),
        Param("b", "str", REQUIRED, "trajectory JSON"),
        Param("M", "int", 2048, "boundary samples"),
        Param("moments", "int", 3, "harmonic moments compared"),
    ],
}

COMMANDS = tuple(SCHEMAS)


def schema(command: str) -> dict[str, Param]:
    if command not in SCHEMAS:
        raise ConfigError(f"unknown command '{command}'")
    return {p.name: p for p in SCHEMAS[command] + COMMON}


def normalize_key(key: str) -> str:
    return key.strip().lstrip("-").replace("-", "_")


def coerce(p: Param, raw) -> object:
    """Convert a raw string (or already-typed value) to the parameter type."""
    if not isinstance(raw, str):
        raw = _render(raw) if isinstance(raw, (list, tuple)) else str(raw)
    text = raw.strip()
    try:
        if p.kind == "int":
            v = int(text, 0)
            if p.name == "seed" and not 0 <= v < 2 ** 64:
                raise ValueError("seed must fit in 64 unsigned bits")
            return v
        if p.kind == "float":
            return float(text)
        if p.kind == "bool":
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if p.kind == "floats":
            return tuple(float(s) for s in text.split(",") if s.strip()) if text.strip("'\"") else ()
        if p.kind == "choice":
            if text not in p.choices:
                raise ValueError(f"expected one of {', '.join(p.choices)}")
            return text
        return text
    except ValueError as exc:
        raise ConfigError(f"key '{p.name}': {exc}") from None


def read_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment. Duplicate keys are errors."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",),
                                       inline_comment_prefixes=("#",), delimiters=("=",),
                                       strict=True)
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + path.read_text(), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if len(parser.sections()) != 1:
        raise ConfigError(f"{path}: sections are not allowed")
    return {normalize_key(k): v for k, v in parser["run"].items()}


@dataclass
class RunConfig:
    command: str
    params: dict
    seed: int
    out: Path
    format_version: str = FORMAT_VERSION
    sources: dict = field(default_factory=dict)       # key -> default | file | flag
    overrides: list = field(default_factory=list)     # keys given in the file and overridden by a flag

    def to_dict(self) -> dict:
        return {"command": self.command, "params": _jsonable(self.params), "seed": self.seed,
                "out": str(self.out), "format_version": self.format_version,
                "sources": dict(self.sources), "overrides": list(self.overrides)}

    def digest(self) -> str:
        body = {"command": self.command, "params": _jsonable(self.params), "seed": self.seed,
                "format_version": self.format_version}
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


def _jsonable(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def parse_config(command: str, path=None, flags: Optional[dict] = None,
                 env: Optional[dict] = None) -> RunConfig:
    """Merge defaults, an optional config file and flag values (flags win).

    Unknown keys, type mismatches and missing required keys raise
    ``ConfigError`` naming the key.
    """
    sch = schema(command)
    env = os.environ if env is None else env
    file_vals = read_config_file(path) if path else {}
    flag_vals = {normalize_key(k): v for k, v in (flags or {}).items()}
    for origin, vals in (("config file", file_vals), ("flag", flag_vals)):
        for k in vals:
            if k not in sch:
                raise ConfigError(f"unknown key '{k}' ({origin}) for command '{command}'")
    values, sources = {}, {}
    for name, p in sch.items():
        if name in flag_vals:
            values[name], sources[name] = coerce(p, flag_vals[name]), "flag"
        elif name in file_vals:
            values[name], sources[name] = coerce(p, file_vals[name]), "file"
        elif p.default is REQUIRED:
            raise ConfigError(f"missing required key '{name}' for command '{command}'")
        else:
            values[name], sources[name] = p.default, "default"
    overrides = sorted(k for k in flag_vals if k in file_vals)
    seed = values.pop("seed")
    out = values.pop("out")
    cfg = RunConfig(command, values, seed, Path(), sources=sources, overrides=overrides)
    if out:
        cfg.out = Path(out)
    else:
        root = Path(env.get(OUTPUT_ROOT_ENV) or DEFAULT_OUTPUT_ROOT)
        cfg.out = root / f"{command}-{cfg.digest()[:12]}"
    return cfg
