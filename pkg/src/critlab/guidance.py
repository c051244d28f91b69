"""Guidance kinds and the time-varying reward they impose on the learner."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .config import ConfigError, SenseParams
from .senses import EyesightStatus, eyesight_status
from .world import Action, EpisodeState, relative_bearing

MENTOR_TRACK_GAIN = 0.25


class GuidanceKind(Enum):
    SPARSE = "sparse"
    HELPER = "helper"
    BEHAVIOR_CLONE = "behavior_clone"

    @classmethod
    def parse(cls, value) -> GuidanceKind:
        if isinstance(value, cls):
            return value
        aliases = {"bc": cls.BEHAVIOR_CLONE, "behaviorclone": cls.BEHAVIOR_CLONE}
        key = str(value).strip().lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"unknown guidance kind {value!r}") from None

    @property
    def order(self) -> int:
        return list(GuidanceKind).index(self)


@dataclass(frozen=True)
class GuidanceSchedule:
    kind: GuidanceKind = GuidanceKind.SPARSE
    t_g: int = 0
    duration: int = 0

    def __post_init__(self):
        if self.t_g < 0 or self.duration < 0:
            raise ConfigError("t_g and duration must be non-negative")

    def active(self, frame: int) -> bool:
        return self.t_g <= frame < self.t_g + self.duration

    @classmethod
    def from_dict(cls, data: dict) -> GuidanceSchedule:
        return cls(
            GuidanceKind.parse(data.get("kind", "sparse")),
            int(data.get("t_g_frames", 0)),
            int(data.get("duration_frames", 0)),
        )

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "t_g_frames": self.t_g, "duration_frames": self.duration}


@dataclass(frozen=True)
class HelperCoefficients:
    blind: float = -0.03
    turn: float = 0.05
    forward: float = 0.03

    @classmethod
    def from_dict(cls, data: dict | None) -> HelperCoefficients:
        return cls(**(data or {}))


def helper_reward(status: EyesightStatus, action: Action, coeffs: HelperCoefficients = HelperCoefficients()) -> float:
    if status is EyesightStatus.OUT:
        return coeffs.blind * action.a_f
    if status is EyesightStatus.LEFT:
        return coeffs.turn * action.a_r + coeffs.forward * action.a_f
    return -coeffs.turn * action.a_r + coeffs.forward * action.a_f


def effective_reward(
    schedule: GuidanceSchedule,
    frame: int,
    base: float,
    status: EyesightStatus,
    action: Action,
    coeffs: HelperCoefficients = HelperCoefficients(),
) -> float:
    # behavior cloning acts through the loss, never through the reward
    if schedule.kind is GuidanceKind.HELPER and schedule.active(frame):
        return base + helper_reward(status, action, coeffs)
    return base


def mentor_action(state: EpisodeState, params: SenseParams) -> Action:
    """Scripted mentor: search-turn when the target is unseen, else approach it."""
    status = eyesight_status(state, params)
    if status is EyesightStatus.OUT:
        return Action(0.0, 1.0)
    bearing = relative_bearing(state.pose, state.target.position)
    half = math.radians(params.fov_half_angle_deg)
    turn = MENTOR_TRACK_GAIN * abs(bearing) / half
    return Action(1.0, turn if status is EyesightStatus.LEFT else -turn)


@dataclass(frozen=True)
class PotentialFit:
    representable: bool
    residual: float
    phi: np.ndarray


def is_potential_based(shaping: np.ndarray, gamma: float, mask: np.ndarray | None = None,
                       threshold: float = 1e-9) -> PotentialFit:
    """Least-squares test of whether F(s, a, s') = gamma * phi(s') - phi(s).

    ``shaping`` has shape (S, A, S). ``mask`` selects the (s, a, s') triples
    that matter, typically those with nonzero transition probability; by
    default every triple is constrained. ``residual`` is the minimal sum of
    squared violations.
    """
    shaping = np.asarray(shaping, dtype=float)
    if shaping.ndim != 3 or shaping.size == 0 or shaping.shape[0] != shaping.shape[2]:
        raise ValueError("shaping must be a non-empty (S, A, S) array")
    n_states = shaping.shape[0]
    if mask is None:
        mask = np.ones(shaping.shape, dtype=bool)
    s_idx, _, s2_idx = np.nonzero(mask)
    if len(s_idx) == 0:
        raise ValueError("mask selects no transitions")
    rows = np.arange(len(s_idx))
    design = np.zeros((len(s_idx), n_states))
    np.add.at(design, (rows, s2_idx), gamma)
    np.add.at(design, (rows, s_idx), -1.0)
    target = shaping[mask]
    phi, *_ = np.linalg.lstsq(design, target, rcond=None)
    residual = float(((design @ phi - target) ** 2).sum())
    return PotentialFit(residual < threshold, residual, phi)
