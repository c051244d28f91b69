"""Backprop versus central finite differences on a random scalar loss.

Errors are norm-relative, ``|g - g_fd| / (|g| + |g_fd|)``, taken per
parameter tensor over the probed entries; the report keeps the worst tensor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .network import PARTITIONS, NetworkSpec, ParamSet, backward, forward, init_params



@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    n_coordinates: int
    directional_rel_error: float


def rel_error(analytic, numeric) -> float:
    analytic, numeric = np.atleast_1d(analytic), np.atleast_1d(numeric)
    denom = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / denom)


def _random_problem(spec: NetworkSpec, rng, batch: int):
    inputs = np.concatenate([
        rng.uniform(0, 1, size=(batch, spec.vision_dim)),
        rng.uniform(0, 1, size=(batch, spec.audio_dim)),
        np.eye(spec.onehot_dim)[rng.integers(0, spec.onehot_dim, size=batch)],
    ], axis=1)
    action = np.stack([rng.uniform(0, 1, batch), rng.uniform(-1, 1, batch)], axis=1)
    weights = (rng.normal(size=(batch, 4)), rng.normal(size=batch), rng.normal(size=batch))
    return inputs, action, weights


def _loss(spec, params, inputs, action, weights, grad=True):
    res = forward(spec, params, inputs, action=action, grad_parts=PARTITIONS if grad else ())
    wp, w1, w2 = weights
    q1, q2 = res.q_values
    loss = (ad.tensor_sum(res.policy_params * wp) + ad.tensor_sum(q1 * w1) + ad.tensor_sum(q2 * w2))
    return loss, res.leaves


def loss_value(spec, params, inputs, action, weights) -> float:
    loss, _ = _loss(spec, params, inputs, action, weights, grad=False)
    return float(loss.data)


def grad_check(spec: NetworkSpec, seed, coords_per_param: int | None = 8, batch: int = 4,
               h: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients with central differences.

    Every parameter tensor is probed at ``coords_per_param`` random entries
    (all entries when None), and the full gradient is additionally checked
    along one random direction spanning every parameter at once.
    """
    rng = np.random.default_rng(seed)
    params = init_params(spec, rng)
    inputs, action, weights = _random_problem(spec, rng, batch)
    loss, leaves = _loss(spec, params, inputs, action, weights)
    grads = backward(loss, leaves)

    worst, worst_name, count = 0.0, "", 0
    for name, arr in params.arrays.items():
        flat = arr.reshape(-1)
        if coords_per_param is None or coords_per_param >= flat.size:
            idx = np.arange(flat.size)
        else:
            idx = rng.choice(flat.size, size=coords_per_param, replace=False)
        numeric = np.empty(len(idx))
        for k, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_value(spec, params, inputs, action, weights)
            flat[i] = orig - h
            down = loss_value(spec, params, inputs, action, weights)
            flat[i] = orig
            numeric[k] = (up - down) / (2 * h)
        err = rel_error(grads[name].reshape(-1)[idx], numeric)
        count += len(idx)
        if err > worst:
            worst, worst_name = err, name

    direction = {n: rng.normal(size=a.shape) for n, a in params.arrays.items()}
    norm = np.sqrt(sum((d ** 2).sum() for d in direction.values()))
    analytic = sum((grads[n] * d).sum() for n, d in direction.items()) / norm
    shifted = []
    for sign in (1.0, -1.0):
        moved = ParamSet(params.arrays.__class__(
            (n, a + sign * h * direction[n] / norm) for n, a in params.arrays.items()))
        shifted.append(loss_value(spec, moved, inputs, action, weights))
    directional = rel_error(analytic, (shifted[0] - shifted[1]) / (2 * h))
    return GradCheckReport(max(worst, directional), worst_name, count, directional)
