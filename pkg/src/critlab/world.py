"""Continuous 2D room for the object-finding task.

Geometry conventions: x to the right, y up, heading measured counterclockwise
from +x. A positive turn drive rotates counterclockwise (to the left), and a
positive bearing means the point lies to the agent's left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .config import ConfigError, EnvConfig

N_CATEGORIES = 10
COLORS = ("red", "green", "blue")
MAX_PLACEMENT_TRIES = 10_000


def wrap_angle(theta: float) -> float:
    """Map an angle to the canonical interval [-pi, pi); in-range angles pass unchanged."""
    if -math.pi <= theta < math.pi:
        return theta
    wrapped = (theta + math.pi) % (2 * math.pi) - math.pi
    # rounding can land exactly on +pi
    return -math.pi if wrapped >= math.pi else wrapped


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float


@dataclass(frozen=True)
class Action:
    a_f: float
    a_r: float

    def clamped(self) -> Action:
        return Action(min(max(float(self.a_f), 0.0), 1.0), min(max(float(self.a_r), -1.0), 1.0))


@dataclass(frozen=True)
class ObjectInstance:
    category: int
    color: str
    position: tuple[float, float]
    radius: float = 0.5


class Reach(Enum):
    NONE = "none"
    TARGET = "target"
    WRONG = "wrong"


@dataclass(frozen=True)
class EpisodeState:
    pose: Pose
    objects: tuple[ObjectInstance, ...]
    target_index: int
    frame: int = 0
    done: bool = False

    @property
    def target(self) -> ObjectInstance:
        return self.objects[self.target_index]


@dataclass(frozen=True)
class StepOutcome:
    reward: float
    terminal: bool
    truncated: bool
    reach: Reach


def relative_bearing(pose: Pose, point) -> float:
    dx = point[0] - pose.x
    dy = point[1] - pose.y
    if dx == 0.0 and dy == 0.0:
        return 0.0
    return wrap_angle(math.atan2(dy, dx) - pose.heading)


def distance(pose: Pose, point) -> float:
    return math.hypot(point[0] - pose.x, point[1] - pose.y)


def reset(config: EnvConfig, seed) -> EpisodeState:
    """Sample a fresh layout.

    ``seed`` may be an int or a ``numpy.random.Generator``; a generator is
    advanced in place, which is how workers draw successive episodes.
    """
    config.validate()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    margin = config.object_radius
    lo, hi = margin, config.room_side - margin
    n_points = config.n_objects + 1
    for _ in range(MAX_PLACEMENT_TRIES):
        pts = rng.uniform(lo, hi, size=(n_points, 2))
        diffs = pts[:, None, :] - pts[None, :, :]
        dists = np.sqrt((diffs ** 2).sum(-1))
        if np.all(dists[np.triu_indices(n_points, 1)] >= config.min_separation):
            break
    else:
        raise ConfigError(
            f"could not place agent and {config.n_objects} objects with separation "
            f"{config.min_separation} in a room of side {config.room_side}"
        )
    categories = rng.choice(N_CATEGORIES, size=config.n_objects, replace=False)
    colors = rng.integers(0, len(COLORS), size=config.n_objects)
    target_index = int(rng.integers(0, config.n_objects))
    heading = wrap_angle(float(rng.uniform(-math.pi, math.pi)))
    objects = tuple(
        ObjectInstance(int(c), COLORS[int(k)], (float(p[0]), float(p[1])), config.object_radius)
        for c, k, p in zip(categories, colors, pts[1:])
    )
    pose = Pose(float(pts[0, 0]), float(pts[0, 1]), heading)
    return EpisodeState(pose=pose, objects=objects, target_index=target_index)


def reach_status(state: EpisodeState, config: EnvConfig) -> Reach:
    half = math.radians(config.facing_half_angle_deg)
    best = None
    for i, obj in enumerate(state.objects):
        d = distance(state.pose, obj.position)
        if d >= config.reach_radius or abs(relative_bearing(state.pose, obj.position)) > half:
            continue
        # nearer object wins; exact distance ties go to the target
        key = (d, 0 if i == state.target_index else 1)
        if best is None or key < best[0]:
            best = (key, i)
    if best is None:
        return Reach.NONE
    return Reach.TARGET if best[1] == state.target_index else Reach.WRONG


def move(pose: Pose, action: Action, config: EnvConfig) -> Pose:
    heading = wrap_angle(pose.heading + action.a_r * math.radians(config.turn_rate_deg))
    step = action.a_f * config.max_speed
    x = min(max(pose.x + step * math.cos(heading), 0.0), config.room_side)
    y = min(max(pose.y + step * math.sin(heading), 0.0), config.room_side)
    return Pose(x, y, heading)


def step(state: EpisodeState, action: Action, config: EnvConfig) -> tuple[EpisodeState, StepOutcome]:
    if state.done:
        raise RuntimeError("step() called on a finished episode; call reset() first")
    action = action.clamped()
    pose = move(state.pose, action, config)
    frame = state.frame + 1
    moved = replace(state, pose=pose, frame=frame)
    reach = reach_status(moved, config)
    if reach is Reach.TARGET:
        outcome = StepOutcome(1.0, True, False, reach)
    elif reach is Reach.WRONG:
        outcome = StepOutcome(-1.0, True, False, reach)
    elif frame >= config.max_frames:
        outcome = StepOutcome(0.0, False, True, reach)
    else:
        outcome = StepOutcome(0.0, False, False, reach)
    done = outcome.terminal or outcome.truncated
    return replace(moved, done=done), outcome


class ObjectFindingEnv:
    """Stateful wrapper owning one episode and its seeded generator."""

    def __init__(self, config: EnvConfig | None = None, seed=None):
        self.config = config or EnvConfig()
        self.config.validate()
        self.rng = np.random.default_rng(seed)
        self.state: EpisodeState | None = None

    def reset(self) -> EpisodeState:
        self.state = reset(self.config, self.rng)
        return self.state

    def step(self, action: Action) -> StepOutcome:
        if self.state is None:
            raise RuntimeError("reset() must be called before step()")
        self.state, outcome = step(self.state, action, self.config)
        return outcome
