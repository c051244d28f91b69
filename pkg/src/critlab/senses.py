"""Egocentric observations rendered from ground-truth episode state."""

from __future__ import annotations

import colorsys
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .config import SenseParams
from .world import COLORS, N_CATEGORIES, EpisodeState, Pose, relative_bearing

WALL_RGB = np.array([0.6, 0.6, 0.6])
COLOR_RGB = {
    "red": np.array([1.0, 0.0, 0.0]),
    "green": np.array([0.0, 1.0, 0.0]),
    "blue": np.array([0.0, 0.0, 1.0]),
}
# Per-category surface tint, blended with the random object color. In the 3D
# original the ten categories differ in shape; in a 2D ray scan all discs look
# alike, so the category needs a visual signature of its own.
CATEGORY_TINT = np.array([colorsys.hsv_to_rgb(i / N_CATEGORIES, 1.0, 1.0) for i in range(N_CATEGORIES)])
COLOR_WEIGHT = 0.5


def object_rgb(category: int, color: str) -> np.ndarray:
    return COLOR_WEIGHT * COLOR_RGB[color] + (1.0 - COLOR_WEIGHT) * CATEGORY_TINT[category]


_RGB_TABLE = {(c, name): object_rgb(c, name) for c in range(N_CATEGORIES) for name in COLOR_RGB}


class EyesightStatus(Enum):
    OUT = "out"
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True)
class Observation:
    vision: np.ndarray              # (2, n_rays, 4): rgb + normalized depth, left eye first
    audio: np.ndarray | None        # (10, 2): (left_gain, right_gain) per category
    target_onehot: np.ndarray       # (10,)


def ray_angles(params: SenseParams) -> np.ndarray:
    """Ray offsets from the heading, leftmost first."""
    half = math.radians(params.fov_half_angle_deg)
    if params.n_rays == 1:
        return np.zeros(1)
    return np.linspace(half, -half, params.n_rays)


def eye_origins(pose: Pose, params: SenseParams, room_side: float = 18.0) -> np.ndarray:
    """Left and right eye positions, clamped into the room."""
    nx, ny = -math.sin(pose.heading), math.cos(pose.heading)
    b = params.eye_baseline / 2
    eyes = np.array([[pose.x + b * nx, pose.y + b * ny], [pose.x - b * nx, pose.y - b * ny]])
    return np.clip(eyes, 0.0, room_side)


def _wall_distance(ox, oy, dx, dy, room_side: float) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        tx = np.where(dx > 0, (room_side - ox) / dx, np.where(dx < 0, -ox / dx, np.inf))
        ty = np.where(dy > 0, (room_side - oy) / dy, np.where(dy < 0, -oy / dy, np.inf))
    return np.minimum(tx, ty)


def ray_disc_hits(ox, oy, dx, dy, cx, cy, radius) -> np.ndarray:
    """Distance along each unit ray to the first disc crossing, inf on a miss.

    All arguments broadcast. A ray starting inside the disc hits it at 0.
    """
    cx, cy = cx - ox, cy - oy
    proj = cx * dx + cy * dy
    dist2 = cx * cx + cy * cy
    perp2 = dist2 - proj * proj
    r2 = radius * radius
    t = proj - np.sqrt(np.maximum(r2 - perp2, 0.0))
    hit = (perp2 <= r2) & (t > 0)
    return np.where(dist2 <= r2, 0.0, np.where(hit, t, np.inf))


def ray_geometry(poses: np.ndarray, params: SenseParams, room_side: float = 18.0):
    """Origins and unit directions of every ray for (B, 3) poses.

    Each output has shape (B, 2 * n_rays); the left eye's rays come first.
    """
    n = params.n_rays
    x, y, h = poses[:, 0:1], poses[:, 1:2], poses[:, 2:3]
    b = params.eye_baseline / 2
    nx, ny = -np.sin(h), np.cos(h)
    side = np.array([1.0] * n + [-1.0] * n)
    ox = np.clip(x + side * b * nx, 0.0, room_side)
    oy = np.clip(y + side * b * ny, 0.0, room_side)
    theta = h + np.tile(ray_angles(params), 2)
    return ox, oy, np.cos(theta), np.sin(theta)


def render_vision_batch(states, params: SenseParams, room_side: float = 18.0) -> np.ndarray:
    """Render (B, 2, n_rays, 4) ray scans for a list of states."""
    n_states = len(states)
    poses = np.array([(s.pose.x, s.pose.y, s.pose.heading) for s in states], dtype=float).reshape(n_states, 3)
    ox, oy, dx, dy = ray_geometry(poses, params, room_side)
    best = _wall_distance(ox, oy, dx, dy, room_side)
    rgb = np.broadcast_to(WALL_RGB, best.shape + (3,)).copy()
    n_obj = max((len(s.objects) for s in states), default=0)
    for k in range(n_obj):
        present = np.array([len(s.objects) > k for s in states])
        objs = [s.objects[k] if len(s.objects) > k else s.objects[0] for s in states]
        cx = np.array([o.position[0] for o in objs])[:, None]
        cy = np.array([o.position[1] for o in objs])[:, None]
        rad = np.array([o.radius if p else -1.0 for o, p in zip(objs, present)])[:, None]
        t = np.where(rad >= 0, ray_disc_hits(ox, oy, dx, dy, cx, cy, np.maximum(rad, 0.0)), np.inf)
        closer = t < best
        best = np.where(closer, t, best)
        colors = np.array([_RGB_TABLE[o.category, o.color] for o in objs])[:, None, :]
        rgb = np.where(closer[..., None], colors, rgb)
    beyond = best > params.max_range
    rgb[beyond] = WALL_RGB
    depth = np.where(beyond, 1.0, best / params.max_range)
    return np.concatenate([rgb, depth[..., None]], -1).reshape(n_states, 2, params.n_rays, 4)


def render_vision(state: EpisodeState, params: SenseParams, room_side: float = 18.0) -> np.ndarray:
    return render_vision_batch([state], params, room_side)[0]


def render_audio(state: EpisodeState, params: SenseParams | None = None) -> np.ndarray:
    gains = np.zeros((N_CATEGORIES, 2))
    for obj in state.objects:
        d = math.hypot(obj.position[0] - state.pose.x, obj.position[1] - state.pose.y)
        g = 1.0 / (1.0 + d)
        s = math.sin(relative_bearing(state.pose, obj.position))
        gains[obj.category] = (g * (1 + s) / 2, g * (1 - s) / 2)
    return gains


def target_onehot(state: EpisodeState) -> np.ndarray:
    out = np.zeros(N_CATEGORIES)
    out[state.target.category] = 1.0
    return out


def observe(state: EpisodeState, params: SenseParams, room_side: float = 18.0) -> Observation:
    vision = render_vision(state, params, room_side)
    audio = render_audio(state, params) if params.multimodal else None
    return Observation(vision, audio, target_onehot(state))


def eyesight_status(state: EpisodeState, params: SenseParams) -> EyesightStatus:
    bearing = relative_bearing(state.pose, state.target.position)
    if abs(bearing) > math.radians(params.fov_half_angle_deg):
        return EyesightStatus.OUT
    return EyesightStatus.LEFT if bearing >= 0 else EyesightStatus.RIGHT


def obs_dims(params: SenseParams) -> dict[str, int]:
    return {
        "vision": 2 * params.n_rays * 4,
        "audio": N_CATEGORIES * 2 if params.multimodal else 0,
        "onehot": N_CATEGORIES,
    }


def observe_batch(states, params: SenseParams, room_side: float = 18.0) -> np.ndarray:
    """Flattened network input rows (vision, audio if multimodal, one-hot)."""
    vision = render_vision_batch(states, params, room_side).reshape(len(states), -1)
    parts = [vision]
    if params.multimodal:
        parts.append(np.stack([render_audio(s, params).ravel() for s in states]))
    parts.append(np.stack([target_onehot(s) for s in states]))
    return np.concatenate(parts, axis=1)


def flatten(obs: Observation) -> np.ndarray:
    """Concatenate vision, audio (if any) and one-hot into one input row."""
    parts = [obs.vision.ravel()]
    if obs.audio is not None:
        parts.append(obs.audio.ravel())
    parts.append(obs.target_onehot)
    return np.concatenate(parts)


__all__ = [
    "COLORS", "CATEGORY_TINT", "EyesightStatus", "Observation", "eyesight_status",
    "flatten", "obs_dims", "observe", "observe_batch", "object_rgb", "ray_angles", "render_audio",
    "render_vision", "render_vision_batch", "target_onehot",
]
