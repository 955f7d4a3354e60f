"""Strict JSON experiment configuration.

Every section is a dataclass; unknown keys and ill-typed values raise
``ConfigError`` naming the offending key path (``params.cutoff_n``).
Infinite reals may be written as the string ``"inf"``.
"""
from __future__ import annotations

import dataclasses
import json
import math
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

KINDS = ("solve", "verify", "sweep-smallness", "blowup-watch", "stability")
PROFILES = ("zero", "constant", "single-mode", "two-mode", "gaussian-bump", "random-band", "checkpoint")


class ConfigError(ValueError):
    pass


@dataclass
class GridConfig:
    n: int = 32
    box_length: float = 2 * math.pi


@dataclass
class ParamsConfig:
    kappa: float = 1.0
    mu: float = 1.0
    cross_coeff: float = 1.0
    cutoff_n: float = math.inf
    rho: float = 4.0
    delta: float = 1.5
    p_blowup: float = 2.0


@dataclass
class InitialConfig:
    """Initial data; components are numbered 1..3."""

    profile: str = "zero"
    amplitude: float = 1.0
    k: list[int] = field(default_factory=lambda: [1, 0, 0])
    component: int = 1
    k2: list[int] = field(default_factory=lambda: [0, 1, 1])
    component2: int = 2
    value: Optional[list[float]] = None
    width: float = 0.5
    j_lo: int = 0
    j_hi: int = 1
    seed: Optional[int] = None
    path: Optional[str] = None
    target_besov32: Optional[float] = None


@dataclass
class IntegratorConfig:
    dt: Optional[float] = None
    max_halvings: int = 4
    norm_ceiling: float = 1e6


@dataclass
class MonitorConfig:
    blowup: bool = True
    phi_psi: bool = True
    l4: bool = True
    hm: bool = True
    hm_order: float = 2.0
    damped: bool = False
    c1: Optional[float] = None
    condition_c: float = 1.0
    eps: float = 2e-3


@dataclass
class VerifyConfig:
    suites: list[str] = field(default_factory=lambda: ["all"])
    count: int = 200
    n: int = 32
    spectrum: str = "power-law"
    alpha: float = 2.0
    j_lo: int = 0
    j_hi: int = 0
    amplitude: float = 1.0
    components: int = 1
    doubling: bool = True
    seed: Optional[int] = None


@dataclass
class SweepConfig:
    amplitudes: list[float] = field(default_factory=list)
    workers: Optional[int] = None


@dataclass
class StabilityConfig:
    perturbation_scale: float = 1e-6
    seed: Optional[int] = None


@dataclass
class ExperimentConfig:
    kind: str = "solve"
    grid: GridConfig = field(default_factory=GridConfig)
    params: ParamsConfig = field(default_factory=ParamsConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    horizon: float = 1.0
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    monitors: MonitorConfig = field(default_factory=MonitorConfig)
    output_dir: Optional[str] = None
    seed: int = 0
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    stability: StabilityConfig = field(default_factory=StabilityConfig)


# -- loading --------------------------------------------------------------------


def _type_name(tp) -> str:
    return getattr(tp, "__name__", str(tp))


def _coerce(value: Any, tp, path: str):
    origin = typing.get_origin(tp)
    if origin in (Union, types.UnionType):
        args = typing.get_args(tp)
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], path)
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, path)
    if origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {type(value).__name__}")
        (item,) = typing.get_args(tp)
        return [_coerce(v, item, f"{path}[{i}]") for i, v in enumerate(value)]
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, str) and value in ("inf", "Infinity"):
            return math.inf
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{path}: unsupported type {_type_name(tp)}")


def _build(cls, data, path: str = ""):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or '<root>'}: expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            where = f"{path}.{key}" if path else key
            raise ConfigError(f"{where}: unknown key")
    kwargs = {}
    for name in names:
        if name in data:
            kwargs[name] = _coerce(data[name], hints[name], f"{path}.{name}" if path else name)
    return cls(**kwargs)


def _require(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ConfigError(f"{path}: {message}")


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    _require(cfg.kind in KINDS, "kind", f"must be one of {', '.join(KINDS)}")
    g = cfg.grid
    _require(g.n >= 8 and g.n % 2 == 0, "grid.n", "must be an even integer >= 8")
    _require(g.box_length > 0, "grid.box_length", "must be positive")
    p = cfg.params
    _require(p.kappa > 0, "params.kappa", "must be positive")
    _require(p.mu > 0, "params.mu", "must be positive")
    _require(p.cutoff_n > 0, "params.cutoff_n", "must be positive")
    _require(p.rho > 2, "params.rho", "must exceed 2")
    _require(1 < p.delta < 2, "params.delta", "must lie in (1, 2)")
    _require(1 < p.p_blowup < math.inf, "params.p_blowup", "must lie in (1, inf)")
    _require(0 <= cfg.seed < 2**64, "seed", "must fit in u64")
    if cfg.kind != "verify":
        _require(cfg.horizon > 0 and math.isfinite(cfg.horizon), "horizon", "must be a positive finite time")
        ini = cfg.initial
        _require(ini.profile in PROFILES, "initial.profile", f"must be one of {', '.join(PROFILES)}")
        _require(len(ini.k) == 3, "initial.k", "must have three entries")
        _require(len(ini.k2) == 3, "initial.k2", "must have three entries")
        _require(ini.component in (1, 2, 3), "initial.component", "must be 1, 2 or 3")
        _require(ini.component2 in (1, 2, 3), "initial.component2", "must be 1, 2 or 3")
        _require(ini.width > 0, "initial.width", "must be positive")
        if ini.value is not None:
            _require(len(ini.value) == 3, "initial.value", "must have three entries")
        if ini.profile == "checkpoint":
            _require(ini.path is not None, "initial.path", "required for the checkpoint profile")
        if ini.profile == "random-band":
            _require(ini.j_lo <= ini.j_hi, "initial.j_hi", "must be >= initial.j_lo")
        if ini.target_besov32 is not None:
            _require(ini.target_besov32 > 0, "initial.target_besov32", "must be positive")
        it = cfg.integrator
        if it.dt is not None:
            _require(it.dt > 0, "integrator.dt", "must be positive")
        _require(it.max_halvings >= 0, "integrator.max_halvings", "must be >= 0")
        _require(it.norm_ceiling > 0, "integrator.norm_ceiling", "must be positive")
        _require(cfg.monitors.eps > 0, "monitors.eps", "must be positive")
    if cfg.kind == "verify":
        from .inequalities import SPECTRA, SUITES

        v = cfg.verify
        _require(len(v.suites) > 0, "verify.suites", "must name at least one suite")
        for i, name in enumerate(v.suites):
            _require(
                name in SUITES or (name == "all" and len(v.suites) == 1),
                f"verify.suites[{i}]",
                f"unknown suite {name!r}; valid: {', '.join(SUITES)} or all",
            )
        _require(v.count >= 1, "verify.count", "must be >= 1")
        _require(v.n >= 8 and v.n % 2 == 0, "verify.n", "must be an even integer >= 8")
        _require(v.spectrum in SPECTRA, "verify.spectrum", f"must be one of {', '.join(SPECTRA)}")
        _require(v.amplitude > 0, "verify.amplitude", "must be positive")
        _require(v.components >= 1, "verify.components", "must be >= 1")
    if cfg.kind == "sweep-smallness":
        a = cfg.sweep.amplitudes
        _require(len(a) >= 3, "sweep.amplitudes", "needs at least three values")
        _require(all(x > 0 for x in a), "sweep.amplitudes", "values must be positive")
        _require(all(x < y for x, y in zip(a, a[1:])), "sweep.amplitudes", "must be strictly increasing")
        if cfg.sweep.workers is not None:
            _require(cfg.sweep.workers >= 1, "sweep.workers", "must be >= 1")
    if cfg.kind == "stability":
        _require(cfg.stability.perturbation_scale > 0, "stability.perturbation_scale", "must be positive")
    return cfg


def config_from_dict(data: dict) -> ExperimentConfig:
    return validate(_build(ExperimentConfig, data))


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    return config_from_dict(data)


def _encode(x):
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if isinstance(x, dict):
        return {k: _encode(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_encode(v) for v in x]
    return x


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return _encode(dataclasses.asdict(cfg))


def dump_json(obj) -> str:
    """Deterministic JSON text (infinities as ``"inf"``, NaN as ``null``)."""

    def clean(x):
        if isinstance(x, float):
            if math.isnan(x):
                return None
            if math.isinf(x):
                return "inf" if x > 0 else "-inf"
        if isinstance(x, dict):
            return {k: clean(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [clean(v) for v in x]
        return x

    return json.dumps(clean(obj), indent=2, allow_nan=False) + "\n"
