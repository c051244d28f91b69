import math

import numpy as np
import pytest

from critlab.netcore import NetworkSpec, init_params
from critlab.transfer import (
    TEST,
    TRAIN,
    encode,
    generate_probe_dataset,
    linear_probe,
    load_dataset,
    object_bearings,
    probe_sweep,
    save_dataset,
)

SPEC = NetworkSpec()


@pytest.fixture(scope="module")
def small_ds():
    return generate_probe_dataset(10, 0)


def test_dataset_layout(small_ds):
    ds = small_ds
    assert ds.vision.shape == (100, 2, 32, 4)
    assert np.bincount(ds.labels).tolist() == [10] * 10
    assert (ds.subset(TRAIN).labels.size, ds.subset(TEST).labels.size) == (80, 20)
    assert np.array_equal(ds.ids, np.arange(100))


def test_dataset_is_seeded(small_ds):
    again = generate_probe_dataset(10, 0)
    assert np.array_equal(again.vision, small_ds.vision)
    assert not np.array_equal(generate_probe_dataset(10, 1).vision, small_ds.vision)
    # prefix stability: item (c, i) does not depend on how many items per class are drawn
    bigger = generate_probe_dataset(12, 0)
    assert np.array_equal(bigger.vision[:10], small_ds.vision[:10])


def test_objects_in_view():
    b = object_bearings(5, 0)
    assert np.all(np.abs(b) <= math.radians(45) + 1e-12)


def test_cache_round_trip(tmp_path, small_ds):
    path = tmp_path / "ds.bin"
    save_dataset(path, small_ds)
    back = load_dataset(path)
    np.testing.assert_allclose(back.vision, small_ds.vision, atol=1e-6)
    for k in ("labels", "split", "ids"):
        assert np.array_equal(getattr(back, k), getattr(small_ds, k))
    path.write_bytes(b"nope" + path.read_bytes()[4:])
    with pytest.raises(ValueError):
        load_dataset(path)


def test_probe_order_invariant(small_ds):
    params = init_params(SPEC, 0)
    a = linear_probe(SPEC, params, small_ds, epochs=5, seed=1)
    perm = np.random.default_rng(0).permutation(len(small_ds))
    b = linear_probe(SPEC, params, small_ds.permuted(perm), epochs=5, seed=1)
    assert a.test_accuracy == b.test_accuracy and a.train_accuracy == b.train_accuracy
    assert a.confusion.sum() == 20


def test_encode_width_mismatch(small_ds):
    spec = NetworkSpec(vision_dim=128)
    with pytest.raises(ValueError):
        encode(spec, init_params(spec, 0), small_ds.vision)


def test_probe_sweep(small_ds):
    other = NetworkSpec(vision_dim=256, vision_widths=(32,))
    with pytest.raises(ValueError):
        probe_sweep([("a", SPEC, init_params(SPEC, 0)), ("b", other, init_params(other, 0))], small_ds)
    with pytest.raises(ValueError):
        probe_sweep([], small_ds)
    ranking = probe_sweep([("a", SPEC, init_params(SPEC, 0)), ("b", SPEC, init_params(SPEC, 1))],
                          small_ds, seeds=(0, 1), epochs=3)
    assert len(ranking) == 2 and ranking[0].mean >= ranking[1].mean
    assert len(ranking[0].accuracies) == 2
