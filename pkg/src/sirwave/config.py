"""Experiment configuration: strict JSON schema backed by dataclasses.

A configuration file looks like::

    {
      "mode": "full-pipeline",
      "params": {"beta": 2.0, "theta": 0.7853981633974483},
      "numerics": {"h": 0.05, "X_list": [20, 40, 60, 80]},
      "output_dir": "out",
      "emit_plots": false
    }

Every section is optional except ``mode``; missing fields take the defaults
below.  Unknown keys anywhere are rejected.
"""

from __future__ import annotations

import json
import math
from dataclasses import MISSING, asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError, ParameterError
from .model import ModelParams, validate_params

MODES = (
    "dispersion",
    "verify-bounds",
    "profile",
    "lyapunov",
    "simulate",
    "probe-nonexistence",
    "full-pipeline",
)


@dataclass(frozen=True)
class Numerics:
    """Numerical settings shared by all modes.

    ``speed_factor`` fixes the wave speed c = speed_factor * c* used by the
    envelope, profile and Lyapunov stages; ``c_test_factor`` fixes the
    subcritical speed of the nonexistence probe.
    """

    speed_factor: float = 1.5
    c_test_factor: float = 0.5
    # envelope certificate
    envelope_lo: float = -200.0
    envelope_hi: float = 200.0
    envelope_points: int = 100_000
    # profile solver
    h: float = 0.05
    tol: float = 1e-8
    maxit: int = 10_000
    X_list: tuple = (20.0, 40.0, 60.0, 80.0)
    residual_tol: float = 5e-3
    laplace_fractions: tuple = (0.25, 0.5, 0.75)
    laplace_rtol: float = 0.02
    # lattice
    dt: float = 0.05
    t_end: float = 80.0
    Ni: int = 400
    Nj: int = 400
    boundary: str = "copy"
    init_shape: str = "half-plane"
    seed_fraction: float = 0.025
    disk_radius: float = 10.0
    front_level: float | None = None
    record_every: float = 1.0
    window_fraction: float = 0.5
    track_halfwidth: float | None = 30.0
    margin: int = 20
    speed_rtol: float = 0.10
    min_r_squared: float = 0.995
    snapshot_every: float | None = None
    probe_Ni: int = 200
    probe_Nj: int = 200
    probe_t_end: float = 40.0


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    params: ModelParams = field(default_factory=ModelParams)
    numerics: Numerics = field(default_factory=Numerics)
    output_dir: str = "out"
    emit_plots: bool = False

    def as_dict(self) -> dict:
        out = asdict(self)
        out["numerics"]["X_list"] = list(self.numerics.X_list)
        out["numerics"]["laplace_fractions"] = list(self.numerics.laplace_fractions)
        return out


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(repr(k) for k in unknown)}")
    kwargs = {}
    for name, f in known.items():
        if name in data:
            kwargs[name] = data[name]
        elif f.default is MISSING and f.default_factory is MISSING:
            raise ConfigError(f"{where}: missing required key {name!r}")
    return kwargs


def _number(value, name: str, integer: bool = False, optional: bool = False):
    if value is None and optional:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"numerics.{name}: expected a number, got {value!r}")
    if integer:
        if float(value) != int(value):
            raise ConfigError(f"numerics.{name}: expected an integer, got {value!r}")
        return int(value)
    if not math.isfinite(value):
        raise ConfigError(f"numerics.{name}: must be finite")
    return float(value)


def _numerics(data) -> Numerics:
    kw = _build(Numerics, data, "numerics")
    defaults = Numerics()
    for f in fields(Numerics):
        if f.name not in kw:
            continue
        v = kw[f.name]
        default = getattr(defaults, f.name)
        if f.name in ("X_list", "laplace_fractions"):
            if not isinstance(v, list) or not v:
                raise ConfigError(f"numerics.{f.name}: expected a non-empty list of numbers")
            kw[f.name] = tuple(_number(x, f.name) for x in v)
        elif f.name in ("boundary", "init_shape"):
            if not isinstance(v, str):
                raise ConfigError(f"numerics.{f.name}: expected a string")
        else:
            optional = f.name in ("front_level", "track_halfwidth", "snapshot_every")
            kw[f.name] = _number(v, f.name, integer=isinstance(default, int) and not isinstance(default, bool),
                                 optional=optional)
    n = Numerics(**kw)
    checks = [
        (n.speed_factor > 0, "speed_factor must be > 0"),
        (0 < n.c_test_factor < 1, "c_test_factor must lie in (0, 1)"),
        (n.envelope_hi > n.envelope_lo, "envelope_hi must exceed envelope_lo"),
        (n.envelope_points >= 10, "envelope_points must be >= 10"),
        (n.h > 0, "h must be > 0"),
        (n.tol > 0, "tol must be > 0"),
        (n.maxit >= 1, "maxit must be >= 1"),
        (all(x > 0 for x in n.X_list), "X_list entries must be > 0"),
        (all(b > a for a, b in zip(n.X_list, n.X_list[1:])), "X_list must be strictly increasing"),
        (all(0 < s < 1 for s in n.laplace_fractions), "laplace_fractions must lie in (0, 1)"),
        (n.dt > 0, "dt must be > 0"),
        (n.t_end > 0, "t_end must be > 0"),
        (n.Ni >= 2 and n.Nj >= 2, "Ni and Nj must be >= 2"),
        (n.probe_Ni >= 2 and n.probe_Nj >= 2, "probe_Ni and probe_Nj must be >= 2"),
        (n.boundary in ("copy", "periodic"), "boundary must be 'copy' or 'periodic'"),
        (n.init_shape in ("half-plane", "disk"), "init_shape must be 'half-plane' or 'disk'"),
        (0 < n.seed_fraction < 1, "seed_fraction must lie in (0, 1)"),
        (0 < n.window_fraction <= 1, "window_fraction must lie in (0, 1]"),
        (n.record_every >= n.dt, "record_every must be >= dt"),
        (n.margin >= 0, "margin must be >= 0"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(f"numerics: {msg}")
    ratio = n.X_list[0] / n.h
    if any(abs(x / n.h - round(x / n.h)) > 1e-9 * max(1.0, x / n.h) for x in n.X_list) or ratio < 1:
        raise ConfigError("numerics: every X in X_list must be a positive multiple of h")
    return n


def _params(data) -> ModelParams:
    kw = _build(ModelParams, data, "params")
    try:
        return validate_params(ModelParams(**kw))
    except ParameterError as exc:
        raise ConfigError(f"params: {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    kw = _build(ExperimentConfig, data, "config")
    mode = kw["mode"]
    if mode not in MODES:
        raise ConfigError(f"mode: must be one of {', '.join(MODES)}, got {mode!r}")
    if "params" in kw:
        kw["params"] = _params(kw["params"])
    if "numerics" in kw:
        kw["numerics"] = _numerics(kw["numerics"])
    if "output_dir" in kw and not isinstance(kw["output_dir"], str):
        raise ConfigError("output_dir: expected a string")
    if "emit_plots" in kw and not isinstance(kw["emit_plots"], bool):
        raise ConfigError("emit_plots: expected true or false")
    return ExperimentConfig(**kw)


def parse_override(text: str) -> tuple[list[str], object]:
    """Split ``a.b.c=value``; the value is read as JSON when possible."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must have the form KEY=VALUE")
    key, raw = text.split("=", 1)
    path = [k for k in key.strip().split(".") if k]
    if not path:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path, value


def apply_overrides(data: dict, overrides) -> dict:
    for text in overrides or ():
        path, value = parse_override(text)
        node = data
        for k in path[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {text!r}: {k!r} is not an object")
        node[path[-1]] = value
    return data


def read_config_dict(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def load_config(path, overrides=None) -> ExperimentConfig:
    """Parse and validate a JSON configuration file.

    Raises:
        ConfigError: on malformed JSON (with line and column), unknown keys,
            or values outside their allowed range.
    """
    return config_from_dict(apply_overrides(read_config_dict(path), overrides))
