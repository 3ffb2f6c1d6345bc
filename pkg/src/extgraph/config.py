"""Experiment configuration: a YAML document validated into typed sections.

Unknown keys are rejected so typos surface as errors instead of silently
falling back to defaults.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .landmarks import DEFAULT_TH_VD
from .pose import Weights
from .sim import PRESETS, CameraModel, NoiseSpec
from .tracking import TrackerConfig

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists ``(field path, message)``."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{p}: {m}" for p, m in errors))


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class NoiseSection(_Section):
    direction_deg: float = Field(0.0, ge=0)
    plane_distance_m: float = Field(0.0, ge=0)
    point_m: float = Field(0.0, ge=0)
    bearing_px: float = Field(0.0, ge=0)

    def spec(self) -> NoiseSpec:
        return NoiseSpec(self.direction_deg, self.plane_distance_m, self.point_m, self.bearing_px)


class CameraSection(_Section):
    hfov_deg: float = Field(70.0, gt=0, lt=180)
    vfov_deg: float = Field(55.0, gt=0, lt=180)
    near: float = Field(0.1, gt=0)
    far: float = Field(12.0, gt=0)
    focal_px: float = Field(525.0, gt=0)

    def model(self) -> CameraModel:
        return CameraModel(self.hfov_deg, self.vfov_deg, self.near, self.far, self.focal_px)


class WeightsSection(_Section):
    point: float = Field(1.0, ge=0)
    plane: float = Field(1.0, ge=0)
    line: float = Field(1.0, ge=0)


class TrackerSection(_Section):
    th_vd: float = Field(DEFAULT_TH_VD, gt=0, lt=1)
    reference: Literal["egraph", "chain"] = "egraph"
    keyframe_max_gap: int = Field(20, ge=1)
    keyframe_min_ratio: float = Field(0.85, ge=0, le=1)
    every_frame_keyframe: bool = False
    refine: bool = True
    plane_distance_tol: float = Field(0.2, gt=0)
    covisibility_min_shared: int = Field(15, ge=1)
    weights: WeightsSection = WeightsSection()

    def config(self) -> TrackerConfig:
        return TrackerConfig(
            th_vd=self.th_vd,
            reference=self.reference,
            keyframe_max_gap=self.keyframe_max_gap,
            keyframe_min_ratio=self.keyframe_min_ratio,
            every_frame_keyframe=self.every_frame_keyframe,
            refine=self.refine,
            weights=Weights(**self.weights.model_dump()),
            plane_distance_tol=self.plane_distance_tol,
        )


class EvalSection(_Section):
    max_dt: float = Field(0.02, ge=0)
    deltas: tuple[int, ...] = (1,)
    are_mode: Literal["align", "first"] = "align"

    @field_validator("deltas")
    @classmethod
    def _positive(cls, v):
        if not v or any(d < 1 for d in v):
            raise ValueError("deltas must be a non-empty list of integers >= 1")
        return v


class DriftSection(_Section):
    trials: int = Field(100, ge=1)
    keyframes: int = Field(50, ge=2)
    sigma_deg: float = Field(0.2, ge=0)


class SweepSection(_Section):
    noise_grid: tuple[float, ...] = (0.0, 0.1, 0.2)
    lengths: tuple[int, ...] = (25, 50, 100)
    trials: int = Field(5, ge=1)
    plane_sigma_m: float = Field(0.0, ge=0)
    methods: tuple[Literal["egraph", "chain"], ...] = ("egraph", "chain")
    workers: int = Field(1, ge=1)
    drift: DriftSection | None = None

    @field_validator("noise_grid")
    @classmethod
    def _grid(cls, v):
        if not v or any(s < 0 for s in v):
            raise ValueError("noise_grid must be a non-empty list of values >= 0")
        return v

    @field_validator("lengths")
    @classmethod
    def _lengths(cls, v):
        if not v or any(n < 2 for n in v):
            raise ValueError("lengths must be a non-empty list of integers >= 2")
        return v


class ExperimentConfig(_Section):
    schema_version: Literal[1]
    seed: int = Field(0, ge=0)
    preset: Literal[PRESETS] = "manhattan"  # type: ignore[valid-type]
    frames: int | None = Field(None, ge=2)
    noise: NoiseSection = NoiseSection()
    camera: CameraSection = CameraSection()
    tracker: TrackerSection = TrackerSection()
    eval: EvalSection = EvalSection()
    sweep: SweepSection = SweepSection()

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def _path(loc) -> str:
    out = ""
    for part in loc:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out or "<root>"


def parse_config(data) -> ExperimentConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError([("<root>", "expected a mapping")])
    if "schema_version" not in data:
        raise ConfigError([("schema_version", f"field required (current version is {SCHEMA_VERSION})")])
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError([(_path(e["loc"]), e["msg"]) for e in exc.errors()]) from None


def load_config(path) -> ExperimentConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError([("<file>", f"YAML parse error: {exc}")]) from None
    return parse_config(data)


def default_config() -> ExperimentConfig:
    return ExperimentConfig(schema_version=SCHEMA_VERSION)
