"""Run configuration: an INI file with ``[params]`` and ``[run]`` sections.

Every key is optional; missing keys take the desk-scale defaults below.
Unknown sections or keys are rejected so a typo never silently falls
back to a default. Example::

    [params]
    base = desk            ; or lab-scale
    gamma = 0.0
    dissipator_preset = custom
    kappa_custom = 0.05
    alpha_g = 2
    c_g = 0.7071067811865476

    [run]
    experiment = master-sweep
    t_max = 20
    n_points = 401

Complex values are written the Python way (``0.6+0.2j``). ``none``
clears an optional number (``g_coupling = none``).
"""

from __future__ import annotations

import configparser
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .analytic import CONVENTIONS, R_MODES
from .master import DEFAULT_COURANT, MODES, RATE_CONVENTIONS
from .model import ParameterError, SystemParams, lab_scale_params

EXPERIMENTS = ("analytic-sweep", "master-sweep", "ensemble-sweep", "compare", "rates")
ENGINES = ("analytic", "master", "ensemble")
BASES = ("desk", "lab-scale")
U64_MAX = 2**64 - 1


class ConfigError(ValueError):
    """Malformed, unknown or out-of-range configuration entry."""


@dataclass(frozen=True)
class RunOptions:
    experiment: str = "analytic-sweep"
    t_max: float = 20.0
    n_points: int = 401
    n_traj: int = 2000
    base_seed: int = 0
    substeps: int | None = None
    engines: tuple[str, ...] = ("analytic", "master")
    n_list: tuple[int, ...] = (0, 1, 2, 3)
    fit_window: float = 0.2
    f_convention: str = "unitary"
    r_mode: str = "exact"
    master_mode: str = "structured"
    rate_convention: str = "derived"
    courant: float = DEFAULT_COURANT
    leakage_tol: float = 1e-6
    allow_leakage: bool = False
    deviation_tol: float = 1e-6
    sigma_tol: float = 3.0
    min_fraction: float = 0.99
    rate_tol: float = 0.03
    plot: bool = True


@dataclass(frozen=True)
class RunConfig:
    params: SystemParams
    run: RunOptions = field(default_factory=RunOptions)
    base: str = "desk"

    @property
    def experiment(self) -> str:
        return self.run.experiment

    def times(self):
        import numpy as np

        return np.linspace(0.0, self.run.t_max, self.run.n_points)

    def as_dict(self) -> dict:
        p = self.params.as_dict()
        for k, v in p.items():
            if isinstance(v, complex):
                p[k] = [v.real, v.imag]
        r = asdict(self.run)
        r["engines"] = list(r["engines"])
        r["n_list"] = list(r["n_list"])
        return {"base": self.base, "params": p, "run": r}


_PARAM_TYPES = {f.name: f.type for f in fields(SystemParams)}
_RUN_TYPES = {f.name: f.type for f in fields(RunOptions)}


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int(text):
    value = int(text.strip(), 0)
    return value


def _parse(kind: str, text: str):
    text = text.strip()
    optional = "None" in kind
    if optional and text.lower() == "none":
        return None
    if kind.startswith("float"):
        return float(text)
    if kind.startswith("int"):
        return _parse_int(text)
    if kind.startswith("complex"):
        return complex(text.replace(" ", ""))
    if kind.startswith("bool"):
        return _parse_bool(text)
    if kind.startswith("str"):
        return text
    if kind.startswith("tuple[str"):
        return tuple(s.strip() for s in text.split(",") if s.strip())
    if kind.startswith("tuple[int"):
        return tuple(_parse_int(s) for s in text.split(",") if s.strip())
    raise TypeError(f"no parser for {kind}")


def _check_choice(name, value, choices):
    if value not in choices:
        raise ConfigError(f"{name} = {value!r}; expected one of {', '.join(choices)}")


def validate_run(run: RunOptions) -> None:
    _check_choice("experiment", run.experiment, EXPERIMENTS)
    _check_choice("f_convention", run.f_convention, CONVENTIONS)
    _check_choice("r_mode", run.r_mode, R_MODES)
    _check_choice("master_mode", run.master_mode, MODES)
    _check_choice("rate_convention", run.rate_convention, RATE_CONVENTIONS)
    for e in run.engines:
        _check_choice("engines", e, ENGINES)
    if not (math.isfinite(run.t_max) and run.t_max > 0):
        raise ConfigError(f"t_max must be positive, got {run.t_max}")
    if run.n_points < 2:
        raise ConfigError(f"n_points must be >= 2, got {run.n_points}")
    if run.n_traj < 1:
        raise ConfigError(f"n_traj must be positive, got {run.n_traj}")
    if not 0 <= run.base_seed <= U64_MAX:
        raise ConfigError(f"base_seed must fit in 64 unsigned bits, got {run.base_seed}")
    if run.substeps is not None and run.substeps < 1:
        raise ConfigError("substeps must be positive")
    if run.experiment == "compare" and not 2 <= len(set(run.engines)) <= 3:
        raise ConfigError("compare needs two or three distinct engines")
    if not run.n_list or min(run.n_list) < 0:
        raise ConfigError("n_list must hold non-negative Fock levels")
    for name in ("fit_window", "courant", "leakage_tol", "deviation_tol", "sigma_tol", "rate_tol"):
        value = getattr(run, name)
        if not (math.isfinite(value) and value > 0):
            raise ConfigError(f"{name} must be positive, got {value}")
    if not 0 < run.min_fraction <= 1:
        raise ConfigError(f"min_fraction must lie in (0, 1], got {run.min_fraction}")


def build(entries: dict[str, dict[str, str]]) -> RunConfig:
    """Turn raw ``{section: {key: text}}`` entries into a validated config."""
    unknown = set(entries) - {"params", "run"}
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    raw_params = dict(entries.get("params", {}))
    raw_run = dict(entries.get("run", {}))
    base = raw_params.pop("base", "desk").strip()
    _check_choice("base", base, BASES)

    def convert(raw, types, section):
        out = {}
        for key, text in raw.items():
            if key not in types:
                raise ConfigError(f"unknown key {section}.{key}")
            try:
                out[key] = _parse(str(types[key]), text)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{section}.{key}: {exc}") from None
        return out

    pvals = convert(raw_params, _PARAM_TYPES, "params")
    rvals = convert(raw_run, _RUN_TYPES, "run")
    try:
        params = SystemParams(**pvals) if base == "desk" else lab_scale_params(**pvals)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from None
    run = replace(RunOptions(), **rvals)
    validate_run(run)
    return RunConfig(params=params, run=run, base=base)


def read_entries(path) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    parser.optionxform = str
    try:
        with open(path, encoding="ascii") as fh:
            parser.read_file(fh)
    except (OSError, UnicodeDecodeError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return {s: dict(parser.items(s)) for s in parser.sections()}


def apply_overrides(entries: dict[str, dict[str, str]], overrides) -> dict[str, dict[str, str]]:
    """Apply ``section.key=value`` (or bare ``key=value`` when unambiguous)."""
    out = {s: dict(v) for s, v in entries.items()}
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = (s.strip() for s in item.split("=", 1))
        if "." in key:
            section, key = key.split(".", 1)
        else:
            homes = [s for s, t in (("params", _PARAM_TYPES), ("run", _RUN_TYPES)) if key in t or (s == "params" and key == "base")]
            if len(homes) != 1:
                raise ConfigError(f"override key {key!r} is unknown or ambiguous; use section.key")
            section = homes[0]
        out.setdefault(section, {})[key] = value
    return out


def load(path=None, overrides=(), seed: int | None = None) -> RunConfig:
    """Read ``path`` (or start from defaults), apply overrides and ``seed``."""
    entries = read_entries(path) if path is not None else {}
    entries = apply_overrides(entries, overrides)
    if seed is not None:
        entries.setdefault("run", {})["base_seed"] = str(seed)
    return build(entries)


def write_template(path) -> None:
    """Write a commented config holding every key at its default."""
    lines = ["[params]", "base = desk"]
    for f in fields(SystemParams):
        lines.append(f"{f.name} = {_format(getattr(SystemParams(), f.name))}")
    lines += ["", "[run]"]
    for f in fields(RunOptions):
        lines.append(f"{f.name} = {_format(getattr(RunOptions(), f.name))}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    if isinstance(value, complex):
        return repr(value).strip("()")
    if isinstance(value, float):
        return repr(value)
    return str(value).lower() if isinstance(value, bool) else str(value)
