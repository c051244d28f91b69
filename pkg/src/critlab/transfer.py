"""Linear probing of a frozen vision encoder on rendered single-object views."""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import EnvConfig, SenseParams
from .netcore import AdamState, Network, NetworkSpec, ParamSet, adam_step, backward, load_checkpoint
from .netcore import autodiff as ad
from .senses import render_vision_batch
from .world import COLORS, N_CATEGORIES, EpisodeState, ObjectInstance, Pose, relative_bearing

TRAIN, TEST = 0, 1
TRAIN_FRACTION = 0.8
DISTANCE_RANGE = (1.5, 8.0)
CACHE_MAGIC = b"CLPD"


@dataclass
class ProbeDataset:
    vision: np.ndarray      # (N, 2, n_rays, 4)
    labels: np.ndarray      # (N,) category index
    split: np.ndarray       # (N,) TRAIN or TEST
    ids: np.ndarray         # (N,) stable item ids; the probe orders items by these

    def __len__(self):
        return len(self.labels)

    def subset(self, which: int) -> ProbeDataset:
        m = self.split == which
        return ProbeDataset(self.vision[m], self.labels[m], self.split[m], self.ids[m])

    def permuted(self, order) -> ProbeDataset:
        order = np.asarray(order)
        return ProbeDataset(self.vision[order], self.labels[order], self.split[order], self.ids[order])


def _view(rng: np.random.Generator, category: int, env: EnvConfig, params: SenseParams) -> EpisodeState:
    """Agent anywhere, one object of the given category in front of it."""
    side, r = env.room_side, env.object_radius
    half = math.radians(params.fov_half_angle_deg)
    while True:
        pose = Pose(rng.uniform(0, side), rng.uniform(0, side), rng.uniform(-math.pi, math.pi))
        d = rng.uniform(*DISTANCE_RANGE)
        b = rng.uniform(-half, half)
        x = pose.x + d * math.cos(pose.heading + b)
        y = pose.y + d * math.sin(pose.heading + b)
        if r <= x <= side - r and r <= y <= side - r:
            obj = ObjectInstance(category, COLORS[rng.integers(len(COLORS))], (x, y), r)
            return EpisodeState(pose, (obj,), 0, 0, False)


def _hits_object(vision: np.ndarray) -> bool:
    return bool((np.abs(vision[..., :3] - np.array([0.6, 0.6, 0.6])).sum(-1) > 1e-9).any())


def _views(n_per_class: int, seed: int, params: SenseParams, env: EnvConfig) -> list[EpisodeState]:
    states = []
    for c in range(N_CATEGORIES):
        for i in range(n_per_class):
            rng = np.random.default_rng(np.random.SeedSequence([int(seed), c, i]))
            state = _view(rng, c, env, params)
            # a view where every ray misses the disc is redrawn from the same stream
            while not _hits_object(render_vision_batch([state], params, env.room_side)[0]):
                state = _view(rng, c, env, params)
            states.append(state)
    return states


def generate_probe_dataset(n_per_class: int, seed: int, params: SenseParams | None = None,
                           env: EnvConfig | None = None) -> ProbeDataset:
    """``n_per_class`` views per category; the first 80% of each class's item
    seeds form the train split, the rest the test split."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    params = params or SenseParams()
    env = env or EnvConfig()
    n_train = min(n_per_class - 1, round(TRAIN_FRACTION * n_per_class)) if n_per_class > 1 else 1
    index = np.arange(N_CATEGORIES * n_per_class)
    return ProbeDataset(
        render_vision_batch(_views(n_per_class, seed, params, env), params, env.room_side),
        index // n_per_class,
        np.where(index % n_per_class < n_train, TRAIN, TEST).astype(np.int8),
        index,
    )


def object_bearings(n_per_class: int, seed: int, params: SenseParams | None = None,
                    env: EnvConfig | None = None) -> np.ndarray:
    """Bearing of the object in each generated view, in dataset order."""
    params = params or SenseParams()
    env = env or EnvConfig()
    return np.array([relative_bearing(s.pose, s.objects[0].position)
                     for s in _views(n_per_class, seed, params, env)])


# -- cache -------------------------------------------------------------------------

def save_dataset(path, ds: ProbeDataset) -> None:
    """Header (magic, JSON shape info) then float32 features and uint8 labels/split, int64 ids."""
    header = json.dumps({"n": len(ds), "shape": list(ds.vision.shape[1:])}).encode()
    with Path(path).open("wb") as fh:
        fh.write(CACHE_MAGIC + struct.pack("<I", len(header)) + header)
        fh.write(ds.vision.astype("<f4").tobytes())
        fh.write(ds.labels.astype(np.uint8).tobytes())
        fh.write(ds.split.astype(np.uint8).tobytes())
        fh.write(ds.ids.astype("<i8").tobytes())


def load_dataset(path) -> ProbeDataset:
    raw = Path(path).read_bytes()
    if raw[:4] != CACHE_MAGIC:
        raise ValueError(f"{path} is not a probe dataset cache")
    (hlen,) = struct.unpack_from("<I", raw, 4)
    meta = json.loads(raw[8:8 + hlen])
    n, shape = meta["n"], tuple(meta["shape"])
    off = 8 + hlen
    size = n * int(np.prod(shape))
    vision = np.frombuffer(raw, "<f4", size, off).astype(float).reshape((n,) + shape)
    off += 4 * size
    labels = np.frombuffer(raw, np.uint8, n, off).astype(np.int64)
    split = np.frombuffer(raw, np.uint8, n, off + n).astype(np.int8)
    ids = np.frombuffer(raw, "<i8", n, off + 2 * n).astype(np.int64)
    return ProbeDataset(vision, labels, split, ids)


# -- probing -------------------------------------------------------------------------------

@dataclass
class ProbeReport:
    train_accuracy: float
    test_accuracy: float
    confusion: np.ndarray       # (10, 10) test counts, rows = true label

    def to_dict(self) -> dict:
        return {"train_accuracy": self.train_accuracy, "test_accuracy": self.test_accuracy,
                "confusion": self.confusion.tolist()}


def encode(spec: NetworkSpec, params: ParamSet, vision: np.ndarray) -> np.ndarray:
    """Frozen vision-encoder features for a stack of ray scans."""
    flat = np.asarray(vision, dtype=float).reshape(len(vision), -1)
    if flat.shape[1] != spec.vision_dim:
        raise ValueError(f"dataset vision width {flat.shape[1]} != encoder input {spec.vision_dim}")
    return Network(spec).encode_vision(params.tensors(()), flat).data


def _confusion(true, pred) -> np.ndarray:
    m = np.zeros((N_CATEGORIES, N_CATEGORIES), dtype=np.int64)
    np.add.at(m, (true, pred), 1)
    return m


def linear_probe(spec: NetworkSpec, params: ParamSet, dataset: ProbeDataset, epochs: int = 60,
                 lr: float = 1e-2, seed: int = 0, batch: int = 64, shuffle_labels: bool = False) -> ProbeReport:
    """Fit a softmax-regression head on frozen encoder features.

    Training items are first put in id order, so the result does not depend
    on how the caller ordered the dataset. ``shuffle_labels`` permutes the
    training labels (a chance-level control).
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x9B]))
    train = dataset.subset(TRAIN)
    train = train.permuted(np.argsort(train.ids, kind="stable"))
    test = dataset.subset(TEST)
    if len(train) == 0 or len(test) == 0:
        raise ValueError("probe dataset needs both train and test items")
    x_train = encode(spec, params, train.vision)
    x_test = encode(spec, params, test.vision)
    y_train = train.labels.copy()
    if shuffle_labels:
        y_train = rng.permutation(y_train)
    dim = x_train.shape[1]
    bound = 1.0 / math.sqrt(dim)
    head = {"w": rng.uniform(-bound, bound, (dim, N_CATEGORIES)), "b": np.zeros(N_CATEGORIES)}
    opt = AdamState(lr=lr)
    onehot = np.eye(N_CATEGORIES)
    for _ in range(epochs):
        order = rng.permutation(len(x_train))
        for start in range(0, len(order), batch):
            idx = order[start:start + batch]
            P = {k: ad.Tensor(v, requires_grad=True) for k, v in head.items()}
            logits = ad.Tensor(x_train[idx]) @ P["w"] + P["b"]
            loss = -ad.mean(ad.tensor_sum(ad.log_softmax(logits, axis=1) * onehot[y_train[idx]], axis=1))
            adam_step(head, backward(loss, P), opt)
    predict = lambda x: np.argmax(x @ head["w"] + head["b"], axis=1)  # noqa: E731
    train_acc = float(np.mean(predict(x_train) == train.labels))
    conf = _confusion(test.labels, predict(x_test))
    return ProbeReport(train_acc, float(np.trace(conf) / conf.sum()), conf)


@dataclass
class ProbeRanking:
    label: str
    accuracies: list[float]
    mean: float
    stderr: float


def _load(entry):
    if isinstance(entry, (str, Path)):
        spec, params = load_checkpoint(entry)
        return str(entry), spec, params
    return entry


def probe_sweep(checkpoints, dataset: ProbeDataset, seeds=(0, 1, 2), **probe_kwargs) -> list[ProbeRanking]:
    """Probe each checkpoint (path or (label, spec, params)) with several head
    seeds; returns entries sorted by mean test accuracy, best first."""
    entries = [_load(c) for c in checkpoints]
    if not entries:
        raise ValueError("probe_sweep needs at least one checkpoint")
    if len({spec.hash for _, spec, _ in entries}) > 1:
        raise ValueError("checkpoints have different network specs")
    out = []
    for label, spec, params in entries:
        accs = [linear_probe(spec, params, dataset, seed=s, **probe_kwargs).test_accuracy for s in seeds]
        se = float(np.std(accs, ddof=1) / math.sqrt(len(accs))) if len(accs) > 1 else 0.0
        out.append(ProbeRanking(label, accs, float(np.mean(accs)), se))
    return sorted(out, key=lambda r: -r.mean)


__all__ = [
    "ProbeDataset", "ProbeRanking", "ProbeReport", "encode", "generate_probe_dataset", "linear_probe",
    "load_dataset", "object_bearings", "probe_sweep", "save_dataset",
]
