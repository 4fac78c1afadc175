"""Planner configuration: defaults, JSON loading, environment overrides."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import InputError

ENV_PREFIX = "INSPECTPLAN_"


@dataclass
class PrmConfig:
    samples: int = 1000
    poisson_fraction: float = 0.10          # minimum node spacing / scene bbox diagonal
    connect_radius_fraction: float = 0.25   # connection radius / scene bbox diagonal
    max_doublings: int = 6


@dataclass
class GridConfig:
    cell_fraction: float = 0.01   # cell edge / scene bbox diagonal
    robot_radius: float = 0.0     # meters
    max_cells: int = 20_000_000


@dataclass
class OracleConfig:
    mode: str = "geometric"
    url: Optional[str] = None
    saliency_threshold: float = 0.5
    omega_ref: float = 0.4        # steradians giving full saliency
    max_in_flight: int = 8
    timeout: float = 10.0
    retries: int = 2
    backoff: float = 0.2


@dataclass
class SmoothingConfig:
    alpha_min: float = 0.125
    epsilon_fraction: float = 1e-6   # convergence move / grid extent diagonal
    max_passes: int = 1000


@dataclass
class SplineConfig:
    degree: int = 5
    lam: float = 10.0
    ctrl_weight: float = 1e-3
    speed: float = 1.0
    max_subdiv_rounds: int = 8


@dataclass
class MetricsConfig:
    samples: int = 2000


# JSON spelling of fields whose Python name differs
_ALIASES = {"lam": "lambda"}


@dataclass
class PlannerConfig:
    seed: int = 0
    prm: PrmConfig = field(default_factory=PrmConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    spline: SplineConfig = field(default_factory=SplineConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    def validate(self) -> "PlannerConfig":
        frac = {
            "prm.poisson_fraction": self.prm.poisson_fraction,
            "prm.connect_radius_fraction": self.prm.connect_radius_fraction,
            "grid.cell_fraction": self.grid.cell_fraction,
            "smoothing.epsilon_fraction": self.smoothing.epsilon_fraction,
            "smoothing.alpha_min": self.smoothing.alpha_min,
        }
        for name, v in frac.items():
            if not 0 < v <= 1:
                raise InputError(f"{name} must lie in (0, 1], got {v}")
        checks = [
            (self.prm.samples >= 1, "prm.samples must be >= 1"),
            (self.prm.max_doublings >= 0, "prm.max_doublings must be >= 0"),
            (self.grid.robot_radius >= 0, "grid.robot_radius must be >= 0"),
            (self.grid.max_cells >= 1, "grid.max_cells must be >= 1"),
            (self.oracle.mode in ("geometric", "remote"), "oracle.mode must be geometric or remote"),
            (self.oracle.mode != "remote" or bool(self.oracle.url), "oracle.url is required in remote mode"),
            (0 <= self.oracle.saliency_threshold <= 1, "oracle.saliency_threshold must lie in [0, 1]"),
            (self.oracle.omega_ref > 0, "oracle.omega_ref must be positive"),
            (self.oracle.max_in_flight >= 1, "oracle.max_in_flight must be >= 1"),
            (self.oracle.retries >= 0, "oracle.retries must be >= 0"),
            (self.smoothing.max_passes >= 1, "smoothing.max_passes must be >= 1"),
            (self.spline.degree >= 1, "spline.degree must be >= 1"),
            (self.spline.lam >= 0, "spline.lambda must be >= 0"),
            (self.spline.ctrl_weight >= 0, "spline.ctrl_weight must be >= 0"),
            (self.spline.speed > 0, "spline.speed must be positive"),
            (self.spline.max_subdiv_rounds >= 0, "spline.max_subdiv_rounds must be >= 0"),
            (self.metrics.samples >= 2, "metrics.samples must be >= 2"),
        ]
        for ok, msg in checks:
            if not ok:
                raise InputError(msg)
        return self

    def to_json(self) -> dict:
        doc = {"seed": self.seed}
        for f in dataclasses.fields(self):
            if f.name == "seed":
                continue
            section = getattr(self, f.name)
            doc[f.name] = {_ALIASES.get(k, k): v for k, v in dataclasses.asdict(section).items()}
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "PlannerConfig":
        cfg = cls()
        if not isinstance(doc, dict):
            raise InputError("config must be a JSON object")
        for key, value in doc.items():
            if key == "seed":
                cfg.seed = _coerce(value, int, "seed")
                continue
            section = getattr(cfg, key, None)
            if not dataclasses.is_dataclass(section) or not isinstance(value, dict):
                raise InputError(f"unknown config section {key!r}")
            for k, v in value.items():
                _assign(section, key, k, v)
        return cfg.validate()


def _field_types(section) -> dict:
    hints = {"int": int, "float": float, "str": str, "Optional[str]": str}
    return {f.name: hints[f.type] for f in dataclasses.fields(section)}


def _coerce(value, typ, where):
    if value is None and typ is str:
        return None
    try:
        if typ is int:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError
            return int(value)
        if typ is float:
            if isinstance(value, bool):
                raise ValueError
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise InputError(f"{where}: cannot use {value!r} as {typ.__name__}") from None


def _assign(section, section_name, key, value):
    name = {v: k for k, v in _ALIASES.items()}.get(key, key)
    types = _field_types(section)
    if name not in types:
        raise InputError(f"unknown config key {section_name}.{key}")
    setattr(section, name, _coerce(value, types[name], f"{section_name}.{key}"))


def apply_env(cfg: PlannerConfig, environ=None) -> PlannerConfig:
    """Override fields from ``INSPECTPLAN_<SECTION>__<KEY>`` (and ``INSPECTPLAN_SEED``)."""
    environ = os.environ if environ is None else environ
    for var in sorted(environ):
        if not var.startswith(ENV_PREFIX):
            continue
        rest = var[len(ENV_PREFIX):].lower()
        raw = environ[var]
        if rest == "seed":
            cfg.seed = _coerce(raw, int, var)
            continue
        if "__" not in rest:
            continue
        sec, key = rest.split("__", 1)
        section = getattr(cfg, sec, None)
        if not dataclasses.is_dataclass(section):
            raise InputError(f"{var}: unknown config section {sec!r}")
        _assign(section, sec, key, raw)
    return cfg.validate()


def load_config(path=None, environ=None) -> PlannerConfig:
    """Defaults, then the JSON file (if any), then environment overrides."""
    if path is None:
        cfg = PlannerConfig()
    else:
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise InputError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise InputError(f"config {path} is not valid JSON: {exc}") from None
        cfg = PlannerConfig.from_json(doc)
    return apply_env(cfg, environ)
