"""Experience collection and evaluation rollouts.

Workers are stepped in lockstep with a fixed round-robin order: on each tick
the policy is evaluated once for the whole worker batch, then workers 0..n-1
step in turn and their transitions are emitted in that order. Each worker owns
its environment generator and its action-noise generator, so a run is fully
determined by its seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .. import world
from ..config import EnvConfig, SenseParams
from ..guidance import GuidanceSchedule, HelperCoefficients, effective_reward, mentor_action
from ..netcore import Network, ParamSet, squash
from ..senses import eyesight_status, observe_batch
from ..world import Action, EpisodeState, Pose, Reach
from .sac import policy_stats


@dataclass
class EpisodeRecord:
    base_return: float
    shaped_return: float
    reach: Reach
    length: int
    poses: list[Pose] | None = None
    state: EpisodeState | None = None

    @property
    def success(self) -> bool:
        return self.reach is Reach.TARGET


def seed_sequence(seed) -> np.random.SeedSequence:
    """A SeedSequence with a fresh spawn counter, so repeated spawns agree."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key)
    return np.random.SeedSequence(seed)


class PolicyActor:
    """Network policy; stochastic actions draw noise from per-worker generators."""

    needs_obs = True

    def __init__(self, net: Network, params: ParamSet, deterministic: bool):
        self.net = net
        self.params = params
        self.deterministic = deterministic

    def __call__(self, states, inputs, rngs=None) -> np.ndarray:
        mean, log_std = policy_stats(self.net, self.params, np.asarray(inputs))
        if self.deterministic:
            return squash(mean)
        noise = np.stack([rng.standard_normal(2) for rng in rngs])
        return squash(mean + np.exp(log_std) * noise)


class MentorActor:
    needs_obs = False

    def __init__(self, sp: SenseParams):
        self.sp = sp

    def __call__(self, states, inputs=None, rngs=None) -> np.ndarray:
        return np.array([[a.a_f, a.a_r] for a in (mentor_action(s, self.sp) for s in states)])


class RandomActor:
    """Uniform actions over the action box."""

    needs_obs = False

    def __init__(self, rng: np.random.Generator | None = None):
        self.rng = rng

    def __call__(self, states, inputs=None, rngs=None) -> np.ndarray:
        if rngs is not None:
            return np.array([[r.uniform(0, 1), r.uniform(-1, 1)] for r in rngs])
        n = len(states)
        return np.stack([self.rng.uniform(0, 1, n), self.rng.uniform(-1, 1, n)], axis=1)


class ConstantActor:
    needs_obs = False

    def __init__(self, a_f: float = 0.0, a_r: float = 0.0):
        self.action = np.array([a_f, a_r])

    def __call__(self, states, inputs=None, rngs=None) -> np.ndarray:
        return np.tile(self.action, (len(states), 1))


@dataclass
class Workers:
    env: EnvConfig
    sp: SenseParams
    n: int
    seed: int | np.random.SeedSequence
    env_rngs: list = field(init=False)
    act_rngs: list = field(init=False)
    states: list = field(init=False)
    obs: list = field(init=False)
    ep_base: np.ndarray = field(init=False)
    ep_shaped: np.ndarray = field(init=False)

    def __post_init__(self):
        children = seed_sequence(self.seed).spawn(self.n)
        streams = [c.spawn(2) for c in children]
        self.env_rngs = [np.random.default_rng(s[0]) for s in streams]
        self.act_rngs = [np.random.default_rng(s[1]) for s in streams]
        self.states = [world.reset(self.env, rng) for rng in self.env_rngs]
        self.obs = list(observe_batch(self.states, self.sp, self.env.room_side))
        self.ep_base = np.zeros(self.n)
        self.ep_shaped = np.zeros(self.n)


Sink = Callable[[np.ndarray, np.ndarray, float, np.ndarray, bool], None]


def collect(workers: Workers, steps: int, actor, schedule: GuidanceSchedule, global_frame: int,
            coeffs: HelperCoefficients = HelperCoefficients(), sink: Sink | None = None,
            frame_log: list | None = None) -> list[EpisodeRecord]:
    """Advance the workers by ``steps`` environment frames in total.

    Every transition is passed to ``sink(obs, action, shaped_reward, next_obs,
    terminal)``. Truncated episodes are emitted with ``terminal=False``. When
    ``frame_log`` is given, ``(frame, base, shaped)`` is appended per frame.
    """
    env, sp = workers.env, workers.sp
    episodes: list[EpisodeRecord] = []
    frame = global_frame
    taken = 0
    while taken < steps:
        k = min(workers.n, steps - taken)
        actions = actor(workers.states[:k], workers.obs[:k] if actor.needs_obs else None, workers.act_rngs[:k])
        stepped = []
        for w in range(k):
            state = workers.states[w]
            act = Action(float(actions[w, 0]), float(actions[w, 1])).clamped()
            status = eyesight_status(state, sp)
            nxt, out = world.step(state, act, env)
            shaped = effective_reward(schedule, frame + w, out.reward, status, act, coeffs)
            fresh = world.reset(env, workers.env_rngs[w]) if nxt.done else None
            stepped.append((act, nxt, out, shaped, fresh))
        # one render call per tick: every next state plus any post-reset state
        to_render = [t[1] for t in stepped] + [t[4] for t in stepped if t[4] is not None]
        rows = observe_batch(to_render, sp, env.room_side)
        n_fresh = k
        for w, (act, nxt, out, shaped, fresh) in enumerate(stepped):
            next_obs = rows[w]
            if sink is not None:
                sink(workers.obs[w], np.array([act.a_f, act.a_r]), shaped, next_obs, out.terminal)
            if frame_log is not None:
                frame_log.append((frame, out.reward, shaped))
            workers.ep_base[w] += out.reward
            workers.ep_shaped[w] += shaped
            if fresh is not None:
                episodes.append(EpisodeRecord(workers.ep_base[w], workers.ep_shaped[w], out.reach, nxt.frame))
                workers.ep_base[w] = workers.ep_shaped[w] = 0.0
                nxt, next_obs = fresh, rows[n_fresh]
                n_fresh += 1
            workers.states[w] = nxt
            workers.obs[w] = next_obs
            frame += 1
        taken += k
    return episodes


def run_episodes(actor, env: EnvConfig, sp: SenseParams, n_episodes: int, seed,
                 record_poses: bool = False) -> list[EpisodeRecord]:
    """Roll ``n_episodes`` fresh episodes in lockstep; returns are unshaped."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    children = seed_sequence(seed).spawn(n_episodes)
    rngs = [np.random.default_rng(c) for c in children]
    states = [world.reset(env, rng) for rng in rngs]
    initial = list(states)
    returns = np.zeros(n_episodes)
    poses = [[s.pose] for s in states] if record_poses else None
    results: list[EpisodeRecord | None] = [None] * n_episodes
    alive = list(range(n_episodes))
    while alive:
        inputs = (observe_batch([states[i] for i in alive], sp, env.room_side)
                  if actor.needs_obs else None)
        actions = actor([states[i] for i in alive], inputs, [rngs[i] for i in alive])
        still = []
        for j, i in enumerate(alive):
            act = Action(float(actions[j, 0]), float(actions[j, 1]))
            states[i], out = world.step(states[i], act, env)
            returns[i] += out.reward
            if record_poses:
                poses[i].append(states[i].pose)
            if states[i].done:
                results[i] = EpisodeRecord(returns[i], returns[i], out.reach, states[i].frame,
                                           poses[i] if record_poses else None, initial[i])
            else:
                still.append(i)
        alive = still
    return results
