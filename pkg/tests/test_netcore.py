import time

import numpy as np
import pytest

from critlab.config import ConfigError
from critlab.netcore import (
    AdamState,
    CheckpointError,
    NetworkSpec,
    NonFiniteGradient,
    ParamSet,
    adam_step,
    forward,
    grad_check,
    init_params,
    load_checkpoint,
    read_spec_hash,
    save_checkpoint,
    squash,
)
from critlab.netcore import autodiff as ad
from critlab.netcore.gradcheck import rel_error

UNARY = {
    "tanh": (ad.tanh, lambda x: 1 - np.tanh(x) ** 2),
    "exp": (ad.exp, np.exp),
    "softplus": (ad.softplus, lambda x: 1 / (1 + np.exp(-x))),
    "square": (ad.square, lambda x: 2 * x),
    "neg": (ad.neg, lambda x: -np.ones_like(x)),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_grads(name, rng):
    fn, deriv = UNARY[name]
    x = rng.normal(size=(3, 4))
    t = ad.Tensor(x, requires_grad=True)
    ad.tensor_sum(fn(t)).backward()
    np.testing.assert_allclose(t.grad, deriv(x), rtol=1e-12, atol=1e-14)


def test_log_relu_grads(rng):
    x = rng.uniform(0.5, 2, size=5)
    t = ad.Tensor(x, requires_grad=True)
    ad.tensor_sum(ad.log(t)).backward()
    np.testing.assert_allclose(t.grad, 1 / x)
    y = np.array([-1.0, 2.0, -3.0, 0.5])
    t = ad.Tensor(y, requires_grad=True)
    ad.tensor_sum(ad.relu(t)).backward()
    np.testing.assert_array_equal(t.grad, [0, 1, 0, 1])


def test_broadcast_matmul_concat_minimum(rng):
    a = ad.Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    w = ad.Tensor(rng.normal(size=(3, 2)), requires_grad=True)
    b = ad.Tensor(rng.normal(size=2), requires_grad=True)
    out = ad.concat([a @ w + b, a[:, :1]], axis=-1)
    ad.tensor_sum(ad.minimum(out, ad.Tensor(np.zeros((4, 3))))).backward()
    assert b.grad.shape == (2,) and w.grad.shape == (3, 2)
    mask = (a.data @ w.data + b.data) < 0
    np.testing.assert_allclose(b.grad, mask.sum(0))


def test_log_softmax_grad(rng):
    x = rng.normal(size=(5, 10))
    y = np.eye(10)[rng.integers(0, 10, 5)]
    t = ad.Tensor(x, requires_grad=True)
    ad.tensor_sum(ad.log_softmax(t, axis=1) * y).backward()
    p = np.exp(x) / np.exp(x).sum(1, keepdims=True)
    np.testing.assert_allclose(t.grad, y - p, atol=1e-12)


def test_adam_first_step_is_lr_sign():
    p = {"w": np.array([1.0, -2.0, 3.0])}
    g = {"w": np.array([0.5, -4.0, 1e-3])}
    adam_step(p, g, AdamState(lr=0.1))
    np.testing.assert_allclose(p["w"], [0.9, -1.9, 2.9], atol=1e-5)


def test_adam_rejects_non_finite():
    p = {"w": np.ones(2)}
    st = AdamState()
    with pytest.raises(NonFiniteGradient):
        adam_step(p, {"w": np.array([1.0, np.nan])}, st)
    assert st.t == 0 and np.all(p["w"] == 1)


def test_grad_check_default_shapes():
    start = time.perf_counter()
    worst = max(grad_check(NetworkSpec(), seed).max_rel_error for seed in range(10))
    assert worst < 1e-4
    assert time.perf_counter() - start < 10


def test_grad_check_multimodal_and_relu():
    assert grad_check(NetworkSpec(audio_dim=128), 0).max_rel_error < 1e-4
    assert grad_check(NetworkSpec(vision_dim=8, activation="relu", vision_widths=(6,),
                                  head_widths=(5,), fusion_width=4), 1).max_rel_error < 1e-4


def test_grad_check_linear_is_tight():
    # no hidden layers: the loss is nearly polynomial and central differences are almost exact
    spec = NetworkSpec(vision_dim=6, onehot_dim=3, vision_widths=(), head_widths=(), fusion_width=4)
    rep = grad_check(spec, 3, coords_per_param=None)
    assert rep.max_rel_error < 1e-7


def test_rel_error_zero():
    assert rel_error(np.zeros(3), np.zeros(3)) == 0.0


def test_zero_width_layer_rejected():
    with pytest.raises(ConfigError):
        NetworkSpec(vision_widths=(64, 0))
    with pytest.raises(ConfigError):
        NetworkSpec(activation="gelu")


def test_zero_onehot_projection_annihilates_mask(rng):
    spec = NetworkSpec(vision_dim=8, onehot_dim=3)
    params = init_params(spec, 0)
    params.arrays["object_embed.w0"][:] = 0
    x = np.concatenate([rng.normal(size=(4, 8)), np.eye(3)[[0, 1, 2, 0]]], axis=1)
    res = forward(spec, params, x, grad_parts=())
    assert np.all(res.features.data == 0)


def test_forward_shapes_and_squash(rng):
    spec = NetworkSpec()
    params = init_params(spec, 0)
    x = np.concatenate([rng.uniform(size=(7, 256)), np.eye(10)[:7]], axis=1)
    res = forward(spec, params, x)
    assert res.policy_params.shape == (7, 4) and res.q_values[0].shape == (7,)
    a = squash(rng.normal(scale=10, size=(1000, 2)))
    assert a[:, 0].min() >= 0 and a[:, 0].max() <= 1 and np.abs(a[:, 1]).max() <= 1
    with pytest.raises(ValueError):
        forward(spec, params, x[:, :-1])


def test_checkpoint_round_trip(tmp_path):
    spec = NetworkSpec(audio_dim=128)
    params = init_params(spec, 4)
    path = tmp_path / "a.bin"
    save_checkpoint(path, spec, params)
    spec2, params2 = load_checkpoint(path)
    assert spec2 == spec and read_spec_hash(path) == spec.hash
    assert list(params2) == list(params)
    for n in params:
        np.testing.assert_array_equal(params2[n], params[n].astype(np.float32))
    save_checkpoint(tmp_path / "b.bin", spec2, params2)
    assert (tmp_path / "b.bin").read_bytes() == path.read_bytes()


def test_checkpoint_errors(tmp_path):
    spec = NetworkSpec(vision_dim=4, onehot_dim=2)
    path = tmp_path / "c.bin"
    save_checkpoint(path, spec, init_params(spec, 0))
    raw = path.read_bytes()
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)
    bad.write_bytes(raw + b"\0")
    with pytest.raises(CheckpointError, match="trailing"):
        load_checkpoint(bad)
    bad.write_bytes(raw[:8] + bytes(32) + raw[40:])
    with pytest.raises(CheckpointError, match="hash"):
        load_checkpoint(bad)


def test_paramset_partitions():
    params = init_params(NetworkSpec(vision_dim=4, onehot_dim=2), 0)
    assert set(params.partition("q_head_1")) == {n for n in params if n.startswith("q_head_1.")}
    with pytest.raises(ValueError):
        ParamSet({"bogus.w0": np.zeros(1)})
    cp = params.copy()
    cp.arrays["fusion.w0"] += 1
    assert not np.array_equal(cp["fusion.w0"], params["fusion.w0"])
