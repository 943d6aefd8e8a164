"""Experiment configuration: defaults, presets, INI files and canonical hashing.

Config files are INI-style.  Section names group keys for readability
only; every key is globally unique and must be one of ``FIELDS``::

    [model]
    model = ar2
    rho = 0.2, 0.2

    [experiment]
    n_list = 200, 800
    m = 1000

Lists are comma separated.  Command-line flags override file keys, which
override the preset, which overrides the defaults.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from lantest.errors import ConfigError

POLICIES = ("true", "lse", "discrete", "mde")
MODELS = ("ar1", "ar2", "ar1-arch")
ALTS = ("ex1", "ex2", "ex3", "ex1-odd")
NOISES = ("gaussian", "student")
CONSTANTS_MODES = ("analytic", "ergodic", "zero")


def _grid(lo, hi, step):
    k = round((hi - lo) / step)
    return tuple(round(lo + i * step, 10) for i in range(k + 1))


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "ar1"
    rho: tuple = (0.1,)
    beta: float = 0.5
    arch_b: str = "bounded"
    alt: str = "ex1"
    h: float = 1.0
    hprime: float = 1.0
    noise: str = "gaussian"
    dof: int = 5
    n_list: tuple = (30, 40, 60, 80)
    m: int = 1000
    seed: int = 20240601
    a_grid: tuple = field(default_factory=lambda: _grid(0.0, 1.0, 0.1))
    policies: tuple = POLICIES
    alpha: float = 0.05
    burnin: int = 500
    c: float = 1.0
    corrected_component: int = 0
    constants_mode: str = "analytic"
    n_aux: int = 1_000_000
    tau_mode: str = "aux"
    power_convention: str = "lecam"
    threads: int = 1

    def validate(self) -> "ExperimentConfig":
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}")
        need = {"ar1": 1, "ar2": 2, "ar1-arch": 1}[self.model]
        if len(self.rho) != need:
            raise ConfigError(f"model {self.model} needs {need} rho value(s)")
        if self.alt not in ALTS:
            raise ConfigError(f"alt must be one of {ALTS}")
        if self.noise not in NOISES:
            raise ConfigError(f"noise must be one of {NOISES}")
        if self.noise == "student" and self.dof < 4:
            raise ConfigError("student dof must be >= 4")
        if not self.n_list or any(n < 3 for n in self.n_list):
            raise ConfigError("n_list must be nonempty with every n >= 3")
        if self.m < 1:
            raise ConfigError("m must be >= 1")
        if not self.a_grid:
            raise ConfigError("a_grid must be nonempty")
        bad = [p for p in self.policies if p not in POLICIES]
        if bad or not self.policies:
            raise ConfigError(f"unknown policies {bad}; choose from {POLICIES}")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.burnin < 0 or self.c <= 0 or self.n_aux < 100:
            raise ConfigError("need burnin >= 0, c > 0, n_aux >= 100")
        if self.constants_mode not in CONSTANTS_MODES:
            raise ConfigError(f"constants_mode must be one of {CONSTANTS_MODES}")
        if self.tau_mode not in ("aux", "plugin"):
            raise ConfigError("tau_mode must be aux or plugin")
        if self.power_convention not in ("lecam", "paper"):
            raise ConfigError("power_convention must be lecam or paper")
        if not 0 <= self.corrected_component < len(self.rho):
            raise ConfigError("corrected_component must index a mean parameter")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        return self

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def canonical(self) -> dict:
        """Plain-JSON form; ``threads`` is excluded since it never changes results."""
        out = {}
        for f in dataclasses.fields(self):
            if f.name == "threads":
                continue
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_FLOAT_TUPLES = {"rho", "a_grid"}
_INT_TUPLES = {"n_list"}
_STR_TUPLES = {"policies"}
_INTS = {"dof", "m", "seed", "burnin", "corrected_component", "n_aux", "threads"}
_FLOATS = {"beta", "h", "hprime", "alpha", "c"}
FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def coerce(key: str, value):
    """Convert a string (or already-typed) value for ``key``."""
    if key not in FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    try:
        if key in _FLOAT_TUPLES | _INT_TUPLES | _STR_TUPLES:
            if isinstance(value, str):
                items = [v.strip() for v in value.split(",") if v.strip()]
            else:
                items = list(value)
            if key in _FLOAT_TUPLES:
                return tuple(float(v) for v in items)
            if key in _INT_TUPLES:
                return tuple(int(v) for v in items)
            return tuple(str(v) for v in items)
        if key in _INTS:
            return int(value)
        if key in _FLOATS:
            return float(value)
        return str(value).strip()
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc


PRESETS = {
    "paper-ex1": dict(model="ar1", rho=(0.1,), alt="ex1", n_list=(30, 40, 60, 80), m=1000,
                      alpha=0.05, a_grid=_grid(0.0, 1.0, 0.1)),
    "paper-ex2": dict(model="ar1-arch", rho=(0.1,), beta=0.5, alt="ex2",
                      n_list=(30, 40, 50, 80), m=1000, alpha=0.05, a_grid=_grid(0.0, 1.0, 0.1)),
    "paper-ex3": dict(model="ar2", rho=(0.2, 0.2), alt="ex3", n_list=(30, 40, 50, 80),
                      m=1000, alpha=0.05, a_grid=_grid(0.0, 0.5, 0.05)),
    "desk-ex1": dict(model="ar1", rho=(0.1,), alt="ex1", n_list=(200, 800, 5000), m=1000,
                     alpha=0.05, a_grid=_grid(0.0, 0.4, 0.05)),
}
PRESETS["paper-fig"] = PRESETS["paper-ex1"]


def load_file(path: str | Path) -> dict:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if key in values:
                raise ConfigError(f"key {key!r} given twice")
            values[key] = coerce(key, raw)
    return values


def build_config(preset: str | None = None, file_values: dict | None = None,
                 overrides: dict | None = None) -> ExperimentConfig:
    values = {}
    if preset:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        values.update(PRESETS[preset])
    values.update(file_values or {})
    values.update({k: coerce(k, v) for k, v in (overrides or {}).items() if v is not None})
    if values.get("model") == "ar2" and "rho" not in values:
        values["rho"] = (0.2, 0.2)
    return ExperimentConfig(**values).validate()


def dump_ini(cfg: ExperimentConfig) -> str:
    """Serialize to the INI grammar (round-trips through ``load_file``)."""
    sections = {
        "model": ("model", "rho", "beta", "arch_b"),
        "alternative": ("alt", "h", "hprime", "a_grid"),
        "noise": ("noise", "dof"),
        "experiment": ("n_list", "m", "seed", "alpha", "policies", "burnin", "tau_mode",
                       "power_convention", "threads"),
        "estimator": ("c", "corrected_component", "constants_mode", "n_aux"),
    }
    lines = []
    for name, keys in sections.items():
        lines.append(f"[{name}]")
        for k in keys:
            v = getattr(cfg, k)
            text = ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v) \
                if isinstance(v, tuple) else (repr(v) if isinstance(v, float) else str(v))
            lines.append(f"{k} = {text}")
        lines.append("")
    return "\n".join(lines)
