"""Soft Actor-Critic with twin Q heads, target networks and fixed entropy weight,
plus the supervised behavior-cloning update on mentor demonstrations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..config import ConfigError
from ..netcore import (
    BC_PARTS,
    CRITIC_PARTS,
    POLICY_PARTS,
    AdamState,
    Network,
    NetworkSpec,
    ParamSet,
    adam_step,
    backward,
    init_params,
    squash,
    squash_t,
)
from ..netcore import autodiff as ad
from .buffer import Batch

LOG_2PI = math.log(2 * math.pi)
LOG_2 = math.log(2.0)


@dataclass
class SacConfig:
    alpha: float = 0.01
    lr: float = 3e-4
    gamma: float = 0.99
    workers: int = 8
    update_every: int = 256
    batch: int = 512
    buffer_capacity: int = 20_000
    tau: float = 0.005
    # minibatch steps per update round
    gradient_steps: int = 64

    def validate(self) -> None:
        for name in ("lr", "gamma", "workers", "update_every", "batch", "buffer_capacity", "tau", "gradient_steps"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"SacConfig.{name} must be positive")
        if self.alpha < 0:
            raise ConfigError("SacConfig.alpha must be non-negative")
        if self.batch > self.buffer_capacity:
            raise ConfigError("batch must not exceed buffer capacity")
        if not self.gamma < 1:
            raise ConfigError("gamma must be < 1")
        if not self.tau <= 1:
            raise ConfigError("tau must be <= 1")


@dataclass
class Agent:
    """Learnable state: parameters, target copies of the critic path, optimizers."""

    spec: NetworkSpec
    params: ParamSet
    target: ParamSet
    critic_opt: AdamState
    actor_opt: AdamState
    bc_opt: AdamState
    net: Network = field(init=False, repr=False)

    def __post_init__(self):
        self.net = Network(self.spec)

    @classmethod
    def create(cls, spec: NetworkSpec, rng, lr: float = 3e-4) -> Agent:
        params = init_params(spec, rng)
        return cls(spec, params, params.copy(), AdamState(lr=lr), AdamState(lr=lr), AdamState(lr=lr))


def policy_stats(net: Network, params: ParamSet, inputs: np.ndarray):
    P = params.tensors()
    feats = net.features(P, inputs)
    out = net.policy(P, feats.masked)
    return out.mean.data, out.log_std.data


def select_action(net: Network, params: ParamSet, inputs: np.ndarray, deterministic: bool,
                  noise: np.ndarray | None = None) -> np.ndarray:
    """Squashed-Gaussian actions for a batch of flattened observations.

    ``noise`` holds standard-normal draws, one row per observation; it is
    required in stochastic mode so that callers own the randomness.
    """
    mean, log_std = policy_stats(net, params, inputs)
    if deterministic:
        return squash(mean)
    if noise is None:
        raise ValueError("stochastic action selection needs a noise array")
    return squash(mean + np.exp(log_std) * noise)


def _squash_log_det(pre) -> ad.Tensor:
    """log |d action / d pre| summed over action dims; a_f carries an extra 1/2."""
    per_dim = 2.0 * (LOG_2 - pre - ad.softplus(-2.0 * pre))
    return ad.tensor_sum(per_dim, axis=1) - LOG_2


def sample_with_log_prob(net: Network, P, masked, noise: np.ndarray):
    out = net.policy(P, masked)
    pre = out.mean + ad.exp(out.log_std) * noise
    log_prob = (ad.tensor_sum(-0.5 * noise ** 2 - 0.5 * LOG_2PI - out.log_std, axis=1)
                - _squash_log_det(pre))
    return squash_t(pre), log_prob


def q_targets(agent: Agent, batch: Batch, config: SacConfig, noise: np.ndarray) -> np.ndarray:
    net = agent.net
    P = agent.params.tensors()
    T = agent.target.tensors()
    next_action, next_logp = sample_with_log_prob(net, P, net.features(P, batch.next_obs).masked, noise)
    target_masked = net.features(T, batch.next_obs).masked
    q1 = net.q(T, target_masked, next_action.data, 1).data
    q2 = net.q(T, target_masked, next_action.data, 2).data
    soft = np.minimum(q1, q2) - config.alpha * next_logp.data
    return batch.reward + config.gamma * (1.0 - batch.done) * soft


def critic_loss(agent: Agent, batch: Batch, targets: np.ndarray):
    net = agent.net
    P = agent.params.tensors(CRITIC_PARTS)
    masked = net.features(P, batch.obs).masked
    l1 = ad.mean(ad.square(net.q(P, masked, batch.action, 1) - targets))
    l2 = ad.mean(ad.square(net.q(P, masked, batch.action, 2) - targets))
    return l1, l2, P


def policy_loss(agent: Agent, obs: np.ndarray, alpha: float, noise: np.ndarray):
    """alpha * log pi - min Q, with features detached from the encoder."""
    net = agent.net
    P = agent.params.tensors(POLICY_PARTS)
    masked = net.features(P, obs).masked.detach()
    action, logp = sample_with_log_prob(net, P, masked, noise)
    q = ad.minimum(net.q(P, masked, action, 1), net.q(P, masked, action, 2))
    return ad.mean(alpha * logp - q), logp, P


class UpdateAborted(FloatingPointError):
    pass


def polyak(target: ParamSet, source: ParamSet, tau: float, parts=CRITIC_PARTS) -> None:
    for name in source.names(parts):
        t = target.arrays[name]
        t *= 1.0 - tau
        t += tau * source.arrays[name]


def sac_update(agent: Agent, batch: Batch, config: SacConfig, rng: np.random.Generator) -> dict[str, float]:
    n = len(batch.reward)
    targets = q_targets(agent, batch, config, rng.standard_normal((n, 2)))
    l1, l2, P = critic_loss(agent, batch, targets)
    total = l1 + l2
    if not np.isfinite(total.data):
        raise UpdateAborted(f"non-finite critic loss {float(total.data)}")
    adam_step(agent.params.arrays, backward(total, P), agent.critic_opt)

    ploss, logp, P = policy_loss(agent, batch.obs, config.alpha, rng.standard_normal((n, 2)))
    if not np.isfinite(ploss.data):
        raise UpdateAborted(f"non-finite policy loss {float(ploss.data)}")
    adam_step(agent.params.arrays, backward(ploss, P), agent.actor_opt)
    polyak(agent.target, agent.params, config.tau)
    return {
        "q1": float(l1.data),
        "q2": float(l2.data),
        "policy": float(ploss.data),
        "mean_entropy": float(-logp.data.mean()),
    }


def bc_loss(agent: Agent, obs: np.ndarray, actions: np.ndarray, parts=BC_PARTS):
    net = agent.net
    P = agent.params.tensors(parts)
    out = net.policy(P, net.features(P, obs).masked)
    return ad.mean(ad.square(squash_t(out.mean) - actions)), P


def bc_update(agent: Agent, obs: np.ndarray, actions: np.ndarray) -> float:
    """One Adam step regressing the deterministic policy onto mentor actions."""
    obs = np.asarray(obs, dtype=float)
    if obs.ndim != 2 or len(obs) == 0:
        raise ValueError("behavior cloning needs a non-empty demonstration batch")
    loss, P = bc_loss(agent, obs, np.asarray(actions, dtype=float))
    adam_step(agent.params.arrays, backward(loss, P), agent.bc_opt)
    return float(loss.data)
