"""Run configuration: an INI file with a ``[run]`` section, validated by a schema.

Example::

    [run]
    lambdas = 0.15, 0.20, 0.25
    k_windows = 200:205, 205:210
    grid_dims = 400, 400
    ensemble_size = 100000
    max_collisions = 5000
    fractions = 0.5, 0.7, 0.8, 0.9
    chaotic_collisions = 100000000
    M_t = 0.5
    A0 = 0.7
    seed = 0
    stages = all
"""
from __future__ import annotations

import configparser
import hashlib
import json
from pathlib import Path
from typing import Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError

STAGES = (
    "geometry",
    "transport",
    "chaotic-grid",
    "solve",
    "husimi",
    "localize",
    "spectra-fit",
    "beta-fit",
    "report",
)

# direct inputs of each stage
UPSTREAM = {
    "geometry": (),
    "transport": (),
    "chaotic-grid": (),
    "solve": (),
    "husimi": ("solve", "chaotic-grid"),
    "localize": ("husimi", "chaotic-grid"),
    "spectra-fit": ("solve", "chaotic-grid"),
    "beta-fit": ("localize",),
    "report": ("geometry", "transport", "chaotic-grid", "solve", "localize", "spectra-fit", "beta-fit"),
}

# configuration fields each stage's output depends on
STAGE_FIELDS = {
    "geometry": ("lambdas",),
    "transport": ("lambdas", "ensemble_size", "max_collisions", "fractions", "tail_fraction",
                  "slope_threshold", "seed"),
    "chaotic-grid": ("lambdas", "grid_dims", "chaotic_collisions", "seed"),
    "solve": ("lambdas", "k_windows", "half_width", "basis_factor", "boundary_density"),
    "husimi": ("grid_dims", "husimi_dump"),
    "localize": ("M_t",),
    "spectra-fit": ("min_spacings",),
    "beta-fit": ("A0", "beta_fit_normalized"),
    "report": ("alpha_criterion", "window_states"),
}


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    lambdas: tuple[float, ...]
    k_windows: tuple[tuple[float, float], ...] = ()
    grid_dims: tuple[int, int] = (400, 400)
    ensemble_size: int = Field(100_000, ge=10_000)
    max_collisions: int = Field(5000, ge=10)
    fractions: tuple[float, ...] = (0.5, 0.7, 0.8, 0.9)
    tail_fraction: float = Field(0.1, gt=0, lt=1)
    slope_threshold: float = Field(0.05, gt=0)
    chaotic_collisions: int = Field(100_000_000, ge=1000)
    M_t: float = Field(0.5, ge=-1, le=1)
    A0: Union[float, str] = 0.7
    beta_fit_normalized: bool = True
    half_width: float = Field(0.03, gt=0, le=0.1)
    basis_factor: float = Field(1.6, ge=1.0)
    boundary_density: float = Field(6.0, ge=6.0)
    husimi_dump: int = Field(4, ge=0)
    min_spacings: int = Field(500, ge=500)
    alpha_criterion: float = 0.9
    window_states: int = Field(100, ge=2)
    seed: int = Field(0, ge=0)
    stages: tuple[str, ...] = STAGES
    out: str = "runs"

    @field_validator("lambdas")
    @classmethod
    def _lams(cls, v):
        if not v:
            raise ValueError("at least one lambda is required")
        for lam in v:
            if not 0.0 <= lam <= 0.5:
                raise ValueError(f"lambda {lam} outside [0, 0.5]")
        return tuple(sorted(set(v)))

    @field_validator("k_windows")
    @classmethod
    def _windows(cls, v):
        for lo, hi in v:
            if not (0 < lo < hi):
                raise ValueError(f"bad k window {lo}:{hi}")
        return tuple(sorted(v))

    @field_validator("fractions")
    @classmethod
    def _fractions(cls, v):
        if not v or not all(0 < f < 1 for f in v):
            raise ValueError("fractions must lie in (0, 1)")
        return tuple(sorted(v))

    @field_validator("grid_dims")
    @classmethod
    def _dims(cls, v):
        if min(v) < 2:
            raise ValueError("grid dimensions must be at least 2")
        return v

    @field_validator("A0")
    @classmethod
    def _a0(cls, v):
        if isinstance(v, str):
            if v.strip().lower() == "max":
                return "max"
            try:
                v = float(v)
            except ValueError:
                raise ValueError("A0 must be a positive number or 'max'") from None
        if not v > 0:
            raise ValueError("A0 must be positive")
        return float(v)

    @field_validator("stages")
    @classmethod
    def _stages(cls, v):
        if len(v) == 1 and v[0] == "all":
            return STAGES
        unknown = [s for s in v if s not in STAGES]
        if unknown:
            raise ValueError(f"unknown stages {unknown}")
        return tuple(s for s in STAGES if s in v)

    @model_validator(mode="after")
    def _alpha(self):
        if self.alpha_criterion not in self.fractions:
            raise ValueError("alpha_criterion must be one of the fractions")
        return self

    def stage_hash(self, stage: str, upstream: dict[str, str]) -> str:
        """Content address of a stage output from its inputs."""
        payload = {
            "stage": stage,
            "fields": {f: getattr(self, f) for f in STAGE_FIELDS[stage]},
            "upstream": {u: upstream[u] for u in UPSTREAM[stage]},
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]

    def config_hash(self) -> str:
        data = self.model_dump(exclude={"out", "stages"})
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()[:16]


_LIST_FIELDS = {"lambdas", "fractions", "grid_dims", "stages"}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key == "k_windows":
        out = []
        for item in raw.replace("\n", ",").split(","):
            item = item.strip()
            if not item:
                continue
            lo, sep, hi = item.partition(":")
            if not sep:
                raise ConfigError(f"k window {item!r} must look like lo:hi")
            out.append((float(lo), float(hi)))
        return out
    if key in _LIST_FIELDS:
        return [p.strip() for p in raw.replace("\n", ",").split(",") if p.strip()]
    return raw


def load_config(path: Path, **overrides) -> RunConfig:
    """Parse and validate a configuration file; ``overrides`` replace file values."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"configuration file {path} not found")
    parser = configparser.ConfigParser()
    parser.optionxform = str
    try:
        parser.read_string(path.read_text())
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if not parser.has_section("run"):
        raise ConfigError(f"{path} has no [run] section")
    try:
        data = {k: _parse_value(k, v) for k, v in parser.items("run")}
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    data.update({k: v for k, v in overrides.items() if v is not None})
    return make_config(**data)


def make_config(**data) -> RunConfig:
    try:
        return RunConfig(**data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None
