"""Masked-interaction agent network.

vision encoder (+ audio encoder) -> concat -> linear fusion (interaction
features) -> elementwise mask by a linear projection of the target one-hot
-> separate MLP heads for the squashed-Gaussian policy and two Q functions.
"""

from __future__ import annotations

import hashlib
import json
from collections import OrderedDict
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from ..config import ConfigError
from . import autodiff as ad
from .autodiff import Tensor

PARTITIONS = ("vision_encoder", "audio_encoder", "fusion", "object_embed",
              "policy_head", "q_head_1", "q_head_2")
ENCODER_PARTS = ("vision_encoder", "audio_encoder", "fusion", "object_embed")
CRITIC_PARTS = ENCODER_PARTS + ("q_head_1", "q_head_2")
POLICY_PARTS = ("policy_head",)
BC_PARTS = ENCODER_PARTS + ("policy_head",)
LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
ACTION_DIM = 2


@dataclass(frozen=True)
class NetworkSpec:
    vision_dim: int = 256
    audio_dim: int = 0
    onehot_dim: int = 10
    vision_widths: tuple[int, ...] = (64, 64)
    audio_widths: tuple[int, ...] = (32,)
    fusion_width: int = 64
    head_widths: tuple[int, ...] = (64, 64)
    activation: str = "tanh"

    def __post_init__(self):
        for name in ("vision_widths", "audio_widths", "head_widths"):
            widths = tuple(getattr(self, name))
            object.__setattr__(self, name, widths)
            if any(int(w) < 1 for w in widths):
                raise ConfigError(f"{name} contains a zero-width layer: {widths}")
        if self.vision_dim < 1 or self.onehot_dim < 1 or self.fusion_width < 1:
            raise ConfigError("vision_dim, onehot_dim and fusion_width must be positive")
        if self.audio_dim < 0:
            raise ConfigError("audio_dim must be non-negative")
        if self.activation not in ("tanh", "relu"):
            raise ConfigError(f"unknown activation {self.activation!r}")

    @property
    def multimodal(self) -> bool:
        return self.audio_dim > 0

    @property
    def input_dim(self) -> int:
        return self.vision_dim + self.audio_dim + self.onehot_dim

    @property
    def vision_feature_dim(self) -> int:
        return self.vision_widths[-1] if self.vision_widths else self.vision_dim

    @property
    def audio_feature_dim(self) -> int:
        if not self.multimodal:
            return 0
        return self.audio_widths[-1] if self.audio_widths else self.audio_dim

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> NetworkSpec:
        return cls(**data)


class ParamSet:
    """Ordered named parameters; the partition is the name prefix before '.'."""

    def __init__(self, arrays: OrderedDict[str, np.ndarray]):
        self.arrays = arrays
        for name in arrays:
            if name.split(".", 1)[0] not in PARTITIONS:
                raise ValueError(f"parameter {name!r} is not in a known partition")

    def __getitem__(self, name):
        return self.arrays[name]

    def __iter__(self):
        return iter(self.arrays)

    def __len__(self):
        return len(self.arrays)

    def names(self, parts=PARTITIONS) -> list[str]:
        return [n for n in self.arrays if n.split(".", 1)[0] in parts]

    def partition(self, part: str) -> dict[str, np.ndarray]:
        return {n: a for n, a in self.arrays.items() if n.split(".", 1)[0] == part}

    def copy(self) -> ParamSet:
        return ParamSet(OrderedDict((n, a.copy()) for n, a in self.arrays.items()))

    def tensors(self, grad_parts=()) -> dict[str, Tensor]:
        return {n: Tensor(a, requires_grad=n.split(".", 1)[0] in grad_parts)
                for n, a in self.arrays.items()}

    def n_scalars(self) -> int:
        return sum(a.size for a in self.arrays.values())


def _dense_stack(arrays, prefix, dims, rng, bias=True):
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        bound = np.sqrt(1.0 / fan_in)
        arrays[f"{prefix}.w{i}"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        if bias:
            arrays[f"{prefix}.b{i}"] = rng.uniform(-bound, bound, size=(fan_out,))


def init_params(spec: NetworkSpec, rng) -> ParamSet:
    """Uniform fan-in initialization, +-sqrt(1/fan_in)."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    arrays: OrderedDict[str, np.ndarray] = OrderedDict()
    _dense_stack(arrays, "vision_encoder", (spec.vision_dim,) + spec.vision_widths, rng)
    if spec.multimodal:
        _dense_stack(arrays, "audio_encoder", (spec.audio_dim,) + spec.audio_widths, rng)
    fused_in = spec.vision_feature_dim + spec.audio_feature_dim
    _dense_stack(arrays, "fusion", (fused_in, spec.fusion_width), rng)
    # no bias: a zero projection must annihilate the mask
    _dense_stack(arrays, "object_embed", (spec.onehot_dim, spec.fusion_width), rng, bias=False)
    # the gate starts open (around 1) so the mask does not shrink features at init
    arrays["object_embed.w0"] += 1.0
    _dense_stack(arrays, "policy_head", (spec.fusion_width,) + spec.head_widths + (2 * ACTION_DIM,), rng)
    for q in ("q_head_1", "q_head_2"):
        _dense_stack(arrays, q, (spec.fusion_width + ACTION_DIM,) + spec.head_widths + (1,), rng)
    return ParamSet(arrays)


class Features(NamedTuple):
    encoded: Tensor     # vision (+audio) encoder output, before fusion
    fused: Tensor       # interaction features, before the mask
    masked: Tensor


class PolicyOut(NamedTuple):
    mean: Tensor
    log_std: Tensor


class Network:
    def __init__(self, spec: NetworkSpec):
        self.spec = spec
        self._act = ad.tanh if spec.activation == "tanh" else ad.relu

    def _mlp(self, P, prefix, x, n_layers, final_activation):
        for i in range(n_layers):
            x = x @ P[f"{prefix}.w{i}"] + P[f"{prefix}.b{i}"]
            if i < n_layers - 1 or final_activation:
                x = self._act(x)
        return x

    def split_inputs(self, inputs: np.ndarray):
        spec = self.spec
        inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
        if inputs.shape[1] != spec.input_dim:
            raise ValueError(f"observation width {inputs.shape[1]} != network input width {spec.input_dim}")
        v = inputs[:, :spec.vision_dim]
        a = inputs[:, spec.vision_dim:spec.vision_dim + spec.audio_dim]
        h = inputs[:, spec.vision_dim + spec.audio_dim:]
        return v, a, h

    def encode_vision(self, P, vision) -> Tensor:
        return self._mlp(P, "vision_encoder", ad.as_tensor(vision), len(self.spec.vision_widths), True)

    def features(self, P, inputs: np.ndarray) -> Features:
        spec = self.spec
        vision, audio, onehot = self.split_inputs(inputs)
        enc = self.encode_vision(P, vision)
        if spec.multimodal:
            aud = self._mlp(P, "audio_encoder", Tensor(audio), len(spec.audio_widths), True)
            enc = ad.concat([enc, aud], axis=-1)
        fused = enc @ P["fusion.w0"] + P["fusion.b0"]
        embed = Tensor(onehot) @ P["object_embed.w0"]
        return Features(enc, fused, fused * embed)

    def policy(self, P, masked: Tensor) -> PolicyOut:
        out = self._mlp(P, "policy_head", masked, len(self.spec.head_widths) + 1, False)
        mean = out[:, :ACTION_DIM]
        raw = out[:, ACTION_DIM:]
        # smooth clamp of log-std into [LOG_STD_MIN, LOG_STD_MAX]
        log_std = LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (ad.tanh(raw) + 1.0)
        return PolicyOut(mean, log_std)

    def q(self, P, masked: Tensor, action, head: int) -> Tensor:
        x = ad.concat([masked, ad.as_tensor(action)], axis=-1)
        return self._mlp(P, f"q_head_{head}", x, len(self.spec.head_widths) + 1, False)[:, 0]


def squash(pre: np.ndarray) -> np.ndarray:
    """Map pre-squash Gaussian samples to (a_f, a_r) in [0,1] x [-1,1]."""
    t = np.tanh(pre)
    return np.stack([(t[..., 0] + 1.0) / 2.0, t[..., 1]], axis=-1)


def squash_t(pre: Tensor) -> Tensor:
    t = ad.tanh(pre)
    return ad.concat([(t[:, 0:1] + 1.0) * 0.5, t[:, 1:2]], axis=-1)


class ForwardResult(NamedTuple):
    features: Tensor
    policy_params: Tensor
    q_values: tuple[Tensor, Tensor]
    trace: Tensor
    leaves: dict[str, Tensor]


def forward(spec: NetworkSpec, params: ParamSet, inputs, action=None, grad_parts=PARTITIONS) -> ForwardResult:
    """Full forward pass with a recorded trace.

    Q heads are evaluated at ``action`` or, when absent, at the deterministic
    policy action. ``trace`` is the sum of every output, usable as a root for
    ``backward`` with a seed gradient of 1.
    """
    net = Network(spec)
    P = params.tensors(grad_parts)
    feats = net.features(P, inputs)
    pol = net.policy(P, feats.masked)
    if action is None:
        action = squash(pol.mean.data)
    q1 = net.q(P, feats.masked, action, 1)
    q2 = net.q(P, feats.masked, action, 2)
    policy_params = ad.concat([pol.mean, pol.log_std], axis=-1)
    trace = ad.tensor_sum(policy_params) + ad.tensor_sum(q1) + ad.tensor_sum(q2)
    return ForwardResult(feats.masked, policy_params, (q1, q2), trace, P)


def backward(trace: Tensor, P: dict[str, Tensor], loss_grad=None) -> dict[str, np.ndarray]:
    """Backpropagate ``loss_grad`` from ``trace`` and collect parameter gradients."""
    if not trace.requires_grad:
        raise RuntimeError("trace is detached: no parameter requires grad")
    for t in P.values():
        t.grad = None
    trace.backward(loss_grad)
    return {n: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for n, t in P.items() if t.requires_grad}
