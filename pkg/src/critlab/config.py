"""Run configuration: JSON documents plus ``key=value`` overrides."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    """Raised for invalid or geometrically infeasible configuration."""


@dataclass
class EnvConfig:
    room_side: float = 18.0
    min_separation: float = 4.0
    reach_radius: float = 2.5
    max_frames: int = 256
    max_speed: float = 0.33
    facing_half_angle_deg: float = 45.0
    turn_rate_deg: float = 9.0
    object_radius: float = 0.5
    # 1 gives the single-object sanity variant (no wrong object)
    n_objects: int = 2

    def validate(self) -> None:
        if self.room_side <= 0 or self.reach_radius <= 0 or self.max_speed < 0:
            raise ConfigError("room_side and reach_radius must be positive, max_speed non-negative")
        if self.max_frames < 1:
            raise ConfigError("max_frames must be >= 1")
        if self.n_objects not in (1, 2):
            raise ConfigError("n_objects must be 1 or 2")
        if self.min_separation < 0 or self.object_radius < 0:
            raise ConfigError("min_separation and object_radius must be non-negative")
        if 2 * self.object_radius >= self.room_side:
            raise ConfigError("objects do not fit in the room")


@dataclass
class SenseParams:
    n_rays: int = 32
    fov_half_angle_deg: float = 45.0
    eye_baseline: float = 0.2
    max_range: float = 26.0
    modality: str = "unimodal"

    def validate(self) -> None:
        if self.n_rays < 1:
            raise ConfigError("n_rays must be >= 1")
        if not 0 < self.fov_half_angle_deg < 180:
            raise ConfigError("fov_half_angle_deg must lie in (0, 180)")
        if self.max_range <= 0 or self.eye_baseline < 0:
            raise ConfigError("max_range must be positive and eye_baseline non-negative")
        if self.modality not in ("unimodal", "multimodal"):
            raise ConfigError(f"unknown modality {self.modality!r}")

    @property
    def multimodal(self) -> bool:
        return self.modality == "multimodal"


DEFAULT_CONFIG: dict[str, Any] = {
    "seed": 0,
    "total_frames": 40_000,
    "env": asdict(EnvConfig()),
    "senses": asdict(SenseParams()),
    "schedule": {"kind": "sparse", "t_g_frames": 0, "duration_frames": 0},
    "helper": {"blind": -0.03, "turn": 0.05, "forward": 0.03},
    "network": {},
    "sac": {},
    "train": {},
    "experiment": {},
    "probe": {"n_per_class": 100, "seed": 0, "epochs": 60, "lr": 0.01, "head_seeds": [0, 1, 2]},
}


def _merge(base: dict, update: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(config: dict, overrides: list[str]) -> dict:
    """Apply ``a.b.c=value`` overrides; values parse as JSON when possible."""
    out = copy.deepcopy(config)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        node = out
        parts = key.strip().split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-object")
        node[parts[-1]] = _parse_value(raw)
    return out


def load_config(path: str | Path | None = None, overrides: list[str] | None = None) -> dict:
    config = DEFAULT_CONFIG
    if path is not None:
        with open(path) as fh:
            config = _merge(config, json.load(fh))
    return apply_overrides(config, overrides or [])


def build(cls, data: dict | None):
    """Instantiate dataclass ``cls`` from a dict, rejecting unknown keys."""
    data = dict(data or {})
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    for f in fields(cls):
        if f.name in data and isinstance(data[f.name], list):
            data[f.name] = tuple(data[f.name])
    obj = cls(**data)
    if hasattr(obj, "validate"):
        obj.validate()
    return obj


def env_config(config: dict) -> EnvConfig:
    return build(EnvConfig, config.get("env"))


def sense_params(config: dict) -> SenseParams:
    return build(SenseParams, config.get("senses"))
