"""Training loop: alternate collection rounds and updates.

Rounds are aligned to multiples of ``update_every`` global frames, so a run
stopped at an aligned frame and continued is indistinguishable from one run
straight through. That property lets a sweep branch guided cells off a shared
sparse-reward trunk.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..config import ConfigError, EnvConfig, SenseParams, build
from ..guidance import GuidanceKind, GuidanceSchedule, HelperCoefficients
from ..netcore import NetworkSpec, ParamSet, save_checkpoint
from ..senses import obs_dims
from .buffer import DemoBuffer, ReplayBuffer
from .rollout import MentorActor, PolicyActor, Workers, collect, run_episodes
from .sac import Agent, SacConfig, bc_update, sac_update

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("frame", "episode_return_base", "episode_return_shaped",
                  "q1_loss", "q2_loss", "policy_loss", "eval_return")

# SeedSequence tags keep the per-purpose random streams of one seed disjoint
TAG_INIT, TAG_WORKERS, TAG_LEARNER, TAG_EVAL = 11, 23, 37, 53


@dataclass
class TrainConfig:
    eval_interval: int = 10_000
    eval_episodes: int = 50
    checkpoint_interval: int = 0
    bc_gradient_steps: int = 256
    bc_batch: int = 512
    bc_lr: float = 1e-3
    # initial std of the policy's pre-squash Gaussian; None keeps the plain init
    init_policy_std: float | None = 1.0

    def validate(self) -> None:
        if self.eval_interval < 0 or self.eval_episodes < 0 or self.checkpoint_interval < 0:
            raise ConfigError("eval/checkpoint intervals and eval_episodes must be non-negative")
        if self.bc_gradient_steps < 1 or self.bc_batch < 1 or not self.bc_lr > 0:
            raise ConfigError("bc_gradient_steps, bc_batch and bc_lr must be positive")


@dataclass
class RunSpec:
    """Everything that determines a training run besides its guidance schedule."""

    env: EnvConfig
    senses: SenseParams
    sac: SacConfig
    train: TrainConfig
    network: NetworkSpec
    helper: HelperCoefficients

    @classmethod
    def from_config(cls, config: dict) -> RunSpec:
        env = build(EnvConfig, config.get("env"))
        senses = build(SenseParams, config.get("senses"))
        dims = obs_dims(senses)
        net_kwargs = dict(config.get("network") or {})
        net_kwargs.update(vision_dim=dims["vision"], audio_dim=dims["audio"], onehot_dim=dims["onehot"])
        for key in ("vision_widths", "audio_widths", "head_widths"):
            if key in net_kwargs:
                net_kwargs[key] = tuple(net_kwargs[key])
        return cls(
            env=env,
            senses=senses,
            sac=build(SacConfig, config.get("sac")),
            train=build(TrainConfig, config.get("train")),
            network=NetworkSpec(**net_kwargs),
            helper=HelperCoefficients.from_dict(config.get("helper")),
        )


@dataclass
class TrainedModel:
    spec: NetworkSpec
    params: ParamSet
    env: EnvConfig
    senses: SenseParams


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


class Trainer:
    def __init__(self, run: RunSpec, schedule: GuidanceSchedule, seed: int, run_dir: str | Path | None = None):
        self.run = run
        self.schedule = schedule
        self.seed = int(seed)
        self.run_dir = Path(run_dir) if run_dir is not None else None
        ss = lambda tag: np.random.SeedSequence([self.seed, tag])  # noqa: E731
        self.agent = Agent.create(run.network, np.random.default_rng(ss(TAG_INIT)), lr=run.sac.lr)
        self.agent.bc_opt.lr = run.train.bc_lr
        if run.train.init_policy_std is not None:
            self._set_initial_std(run.train.init_policy_std)
        self.workers = Workers(run.env, run.senses, run.sac.workers, ss(TAG_WORKERS))
        self.learner_rng = np.random.default_rng(ss(TAG_LEARNER))
        self.eval_seed = ss(TAG_EVAL)
        self.buffer = ReplayBuffer(run.sac.buffer_capacity, run.network.input_dim)
        self.demos = DemoBuffer(run.network.input_dim)
        self.frame = 0
        self.rows: list[dict] = []
        self.shaped_frames: list[int] = []
        self.evals: list[tuple[int, float]] = []
        self.last_eval: np.ndarray | None = None

    def _set_initial_std(self, std: float) -> None:
        from ..netcore.network import LOG_STD_MAX, LOG_STD_MIN
        n_layers = len(self.run.network.head_widths)
        bias = self.agent.params.arrays[f"policy_head.b{n_layers}"]
        unit = (math.log(std) - LOG_STD_MIN) / (LOG_STD_MAX - LOG_STD_MIN) * 2.0 - 1.0
        bias[2:] = math.atanh(min(max(unit, -0.999), 0.999))

    @property
    def model(self) -> TrainedModel:
        return TrainedModel(self.run.network, self.agent.params, self.run.env, self.run.senses)

    def clone(self) -> Trainer:
        return copy.deepcopy(self)

    def with_schedule(self, schedule: GuidanceSchedule) -> Trainer:
        """Copy of this trainer that continues under another schedule."""
        other = self.clone()
        other.schedule = schedule
        return other

    # -- one aligned round ------------------------------------------------
    def _round(self, end: int) -> dict:
        run, steps = self.run, end - self.frame
        row = dict.fromkeys(METRIC_COLUMNS)
        row["frame"] = end
        bc_round = self.schedule.kind is GuidanceKind.BEHAVIOR_CLONE and self.schedule.active(self.frame)
        if bc_round:
            episodes = collect(self.workers, steps, MentorActor(run.senses), self.schedule, self.frame,
                               run.helper, sink=lambda o, a, r, n, d: self.demos.add(o, a))
            losses = [bc_update(self.agent, *self.demos.sample(min(run.train.bc_batch, len(self.demos)),
                                                                self.learner_rng))
                      for _ in range(run.train.bc_gradient_steps)]
            row["policy_loss"] = float(np.mean(losses))
        else:
            actor = PolicyActor(self.agent.net, self.agent.params, deterministic=False)
            frame_log: list = []
            episodes = collect(self.workers, steps, actor, self.schedule, self.frame, run.helper,
                               sink=self.buffer.add, frame_log=frame_log)
            self.shaped_frames.extend(f for f, base, shaped in frame_log if shaped != base)
            if len(self.buffer) >= run.sac.batch:
                stats = [sac_update(self.agent, self.buffer.sample(run.sac.batch, self.learner_rng),
                                    run.sac, self.learner_rng)
                         for _ in range(run.sac.gradient_steps)]
                row["q1_loss"] = float(np.mean([s["q1"] for s in stats]))
                row["q2_loss"] = float(np.mean([s["q2"] for s in stats]))
                row["policy_loss"] = float(np.mean([s["policy"] for s in stats]))
        if episodes:
            row["episode_return_base"] = float(np.mean([e.base_return for e in episodes]))
            row["episode_return_shaped"] = float(np.mean([e.shaped_return for e in episodes]))
        self.frame = end
        return row

    def evaluate(self, n_episodes: int | None = None) -> np.ndarray:
        n = n_episodes or self.run.train.eval_episodes
        actor = PolicyActor(self.agent.net, self.agent.params, deterministic=True)
        records = run_episodes(actor, self.run.env, self.run.senses, n, self.eval_seed)
        return np.array([r.base_return for r in records])

    def run_until(self, total: int, final_eval: bool = True) -> Trainer:
        """Train up to frame ``total``.

        An evaluation happens whenever the frame counter crosses a multiple of
        ``eval_interval`` and, if ``final_eval``, at ``total``. Stopping at a
        multiple of ``update_every`` without the final evaluation leaves no
        trace, so the run can be resumed (or cloned) exactly.
        """
        if total < self.frame:
            raise ValueError(f"cannot run backwards from frame {self.frame} to {total}")
        u = self.run.sac.update_every
        tc = self.run.train
        while self.frame < total:
            start = self.frame
            end = min((start // u + 1) * u, total)
            row = self._round(end)
            crossed = lambda k: k > 0 and end // k > start // k  # noqa: E731
            if tc.eval_episodes > 0 and (crossed(tc.eval_interval) or (final_eval and end == total)):
                self.last_eval = self.evaluate()
                j = float(self.last_eval.mean())
                row["eval_return"] = j
                self.evals.append((end, j))
                log.info("seed %d frame %d eval %.3f", self.seed, end, j)
            if self.run_dir is not None and crossed(tc.checkpoint_interval):
                self.save(self.run_dir / f"ckpt_{end:08d}.bin")
            self.rows.append(row)
        return self

    # -- outputs ----------------------------------------------------------
    def metrics_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(METRIC_COLUMNS)
        for row in self.rows:
            writer.writerow([row["frame"]] + [_fmt(row[c]) for c in METRIC_COLUMNS[1:]])
        return buf.getvalue()

    def write_metrics(self, path) -> None:
        Path(path).write_text(self.metrics_csv())

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(path, self.run.network, self.agent.params)


def train(run: RunSpec, schedule: GuidanceSchedule, total_frames: int, seed: int,
          run_dir: str | Path | None = None) -> Trainer:
    """Train one cell from scratch; returns the trainer (model, metric log)."""
    trainer = Trainer(run, schedule, seed, run_dir).run_until(total_frames)
    if run_dir is not None:
        Path(run_dir).mkdir(parents=True, exist_ok=True)
        trainer.write_metrics(Path(run_dir) / "metrics.csv")
        trainer.save(Path(run_dir) / "final.bin")
        (Path(run_dir) / "schedule.json").write_text(
            json.dumps({"seed": seed, "total_frames": total_frames, **schedule.to_dict(),
                                      "sac": asdict(run.sac)}, indent=2))
    return trainer
