from __future__ import annotations

from typing import NamedTuple

import numpy as np


class Batch(NamedTuple):
    obs: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_obs: np.ndarray
    done: np.ndarray
    ids: np.ndarray


class ReplayBuffer:
    """Fixed-capacity ring buffer; every insertion gets a monotone id."""

    def __init__(self, capacity: int, obs_dim: int, action_dim: int = 2):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.next_obs = np.zeros((capacity, obs_dim))
        self.action = np.zeros((capacity, action_dim))
        self.reward = np.zeros(capacity)
        self.done = np.zeros(capacity)
        self.ids = np.full(capacity, -1, dtype=np.int64)
        self.cursor = 0
        self.size = 0
        self.inserted = 0

    def __len__(self):
        return self.size

    def add(self, obs, action, reward, next_obs, done) -> int:
        i = self.cursor
        self.obs[i] = obs
        self.action[i] = action
        self.reward[i] = reward
        self.next_obs[i] = next_obs
        self.done[i] = float(done)
        self.ids[i] = self.inserted
        self.inserted += 1
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return self.inserted - 1

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self.size, size=batch_size)
        return Batch(self.obs[idx], self.action[idx], self.reward[idx],
                     self.next_obs[idx], self.done[idx], self.ids[idx])


class DemoBuffer:
    """Growable store of (observation, mentor action) pairs."""

    def __init__(self, obs_dim: int, action_dim: int = 2):
        self.obs = np.zeros((0, obs_dim))
        self.action = np.zeros((0, action_dim))
        self._obs: list[np.ndarray] = []
        self._act: list[np.ndarray] = []

    def __len__(self):
        return len(self.obs) + len(self._obs)

    def add(self, obs, action) -> None:
        self._obs.append(np.asarray(obs, dtype=float))
        self._act.append(np.asarray(action, dtype=float))

    def _consolidate(self):
        if self._obs:
            self.obs = np.concatenate([self.obs, np.stack(self._obs)])
            self.action = np.concatenate([self.action, np.stack(self._act)])
            self._obs, self._act = [], []

    def sample(self, batch_size: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        self._consolidate()
        if len(self.obs) == 0:
            raise ValueError("cannot sample from an empty demonstration set")
        idx = rng.integers(0, len(self.obs), size=batch_size)
        return self.obs[idx], self.action[idx]
