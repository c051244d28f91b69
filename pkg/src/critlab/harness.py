"""Critical-period protocol: sparse pretraining for t_G frames, then D frames
under a guidance kind; evaluation on the base reward; selection of the best
(kind, t_G) cell; summary tables and trajectory plots."""

from __future__ import annotations

import csv
import json
import logging
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import ConfigError, EnvConfig, SenseParams
from .guidance import GuidanceKind, GuidanceSchedule
from .learners.rollout import PolicyActor, RandomActor, run_episodes
from .learners.train import RunSpec, Trainer, TrainedModel
from .netcore import Network

log = logging.getLogger(__name__)

EVAL_SEED_TAG = 71      # offset keeping harness evaluation seeds away from training streams


@dataclass
class ExperimentConfig:
    """Sweep grid. Budgets are in full-scale frames and mapped to desk frames by ``scale``."""

    modality: str = "unimodal"
    full_t_g: tuple[int, ...] = (1_000_000, 2_000_000, 3_000_000, 4_000_000)
    full_duration: int = 2_000_000
    kinds: tuple[str, ...] = ("sparse", "helper")
    seeds: int = 3
    first_seed: int = 0
    eval_episodes: int = 50
    scale: float = 0.01

    def validate(self) -> None:
        if any(t < 0 for t in self.full_t_g) or self.full_duration < 0:
            raise ConfigError("budgets must be non-negative")
        if not self.full_t_g:
            raise ConfigError("full_t_g must list at least one budget")
        if self.seeds < 1:
            raise ConfigError("seeds must be >= 1")
        if self.eval_episodes < 1:
            raise ConfigError("eval_episodes must be >= 1")
        if not self.scale > 0:
            raise ConfigError("scale must be positive")
        if self.modality not in ("unimodal", "multimodal"):
            raise ConfigError(f"unknown modality {self.modality!r}")
        for k in self.kinds:
            GuidanceKind.parse(k)

    def desk(self, full_frames: int) -> int:
        return int(round(full_frames * self.scale))

    @property
    def t_g_frames(self) -> list[int]:
        return sorted({self.desk(t) for t in self.full_t_g})

    @property
    def duration_frames(self) -> int:
        return self.desk(self.full_duration)

    @property
    def seed_list(self) -> list[int]:
        return list(range(self.first_seed, self.first_seed + self.seeds))

    @property
    def guidance_kinds(self) -> list[GuidanceKind]:
        return sorted({GuidanceKind.parse(k) for k in self.kinds}, key=lambda k: k.order)


@dataclass
class EvalResult:
    mean: float
    stderr: float
    returns: np.ndarray
    success_rate: float

    @classmethod
    def from_returns(cls, returns, successes=None) -> EvalResult:
        returns = np.asarray(returns, dtype=float)
        n = len(returns)
        stderr = float(returns.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        rate = float(np.mean(successes)) if successes is not None else float(np.mean(returns > 0))
        return cls(float(returns.mean()), stderr, returns, rate)


@dataclass
class GuidanceResult:
    kind: GuidanceKind
    t_g: int
    seed: int
    J: float
    J_stderr: float = 0.0
    curve: list[tuple[int, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "t_g": self.t_g, "seed": self.seed, "J": self.J,
                "J_stderr": self.J_stderr, "curve": [list(p) for p in self.curve]}

    @classmethod
    def from_dict(cls, data: dict) -> GuidanceResult:
        return cls(GuidanceKind.parse(data["kind"]), int(data["t_g"]), int(data["seed"]), float(data["J"]),
                   float(data.get("J_stderr", 0.0)), [tuple(p) for p in data.get("curve", [])])


@dataclass
class CellStats:
    kind: GuidanceKind
    t_g: int
    n: int
    mean: float
    stderr: float
    best: float


@dataclass
class RunReport:
    results: list[GuidanceResult]
    selected: tuple[GuidanceKind, int]

    def cells(self) -> list[CellStats]:
        groups: dict[tuple, list[float]] = defaultdict(list)
        for r in self.results:
            groups[r.kind, r.t_g].append(r.J)
        out = []
        for (kind, t_g), js in sorted(groups.items(), key=lambda kv: (kv[0][1], kv[0][0].order)):
            js = np.array(js)
            se = float(js.std(ddof=1) / math.sqrt(len(js))) if len(js) > 1 else 0.0
            out.append(CellStats(kind, t_g, len(js), float(js.mean()), se, float(js.max())))
        return out

    def to_dict(self) -> dict:
        return {"results": [r.to_dict() for r in self.results],
                "selected": {"kind": self.selected[0].value, "t_g": self.selected[1]},
                "cells": [{**asdict(c), "kind": c.kind.value} for c in self.cells()]}

    @classmethod
    def from_dict(cls, data: dict) -> RunReport:
        results = [GuidanceResult.from_dict(r) for r in data["results"]]
        return cls(results, optimal_guidance(results))


# -- evaluation ----------------------------------------------------------------------

def eval_policy(model, n_episodes: int, seed, env: EnvConfig | None = None,
                senses: SenseParams | None = None) -> EvalResult:
    """Mean and stderr of the base episode return under deterministic actions.

    ``model`` is a TrainedModel or any actor accepted by ``run_episodes``
    (then ``env`` and ``senses`` are required). Shaping never enters here.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    if isinstance(model, TrainedModel):
        actor = PolicyActor(Network(model.spec), model.params, deterministic=True)
        env, senses = model.env, model.senses
    else:
        if env is None or senses is None:
            raise ValueError("env and senses are required when evaluating a bare actor")
        actor = model
    records = run_episodes(actor, env, senses, n_episodes, np.random.SeedSequence([int(seed), EVAL_SEED_TAG]))
    return EvalResult.from_returns([r.base_return for r in records], [r.success for r in records])


def random_baseline(env: EnvConfig, senses: SenseParams, n_episodes: int = 200, seed: int = 0) -> EvalResult:
    """Uniform-random policy returns: the floor a trained agent has to beat."""
    return eval_policy(RandomActor(), n_episodes, seed, env, senses)


# -- selection -------------------------------------------------------------------------

def optimal_guidance(results) -> tuple[GuidanceKind, int]:
    """argmax over (kind, t_G) of the best J across seeds.

    Ties go to the smaller t_G, then to the kind order sparse < helper < BC.
    """
    results = list(results)
    if not results:
        raise ValueError("optimal_guidance needs at least one result")
    best: dict[tuple[GuidanceKind, int], float] = {}
    for r in results:
        key = (r.kind, r.t_g)
        best[key] = max(best.get(key, -math.inf), r.J)
    return min(best, key=lambda k: (-best[k], k[1], k[0].order))


def sign_test(wins: int, n: int) -> float:
    """One-sided p-value of at least ``wins`` successes in ``n`` fair coin flips."""
    return sum(math.comb(n, k) for k in range(wins, n + 1)) / 2 ** n


def guidance_vs_control(report: RunReport, kind: GuidanceKind = GuidanceKind.HELPER) -> dict:
    """Pair each guided cell with the sparse control at the same (t_G, seed)."""
    control = {(r.t_g, r.seed): r.J for r in report.results if r.kind is GuidanceKind.SPARSE}
    pairs = [(r.t_g, r.seed, r.J, control[r.t_g, r.seed]) for r in report.results
             if r.kind is kind and (r.t_g, r.seed) in control]
    wins = sum(j > c for _, _, j, c in pairs)
    ties = sum(j == c for _, _, j, c in pairs)
    n = len(pairs) - ties
    return {"pairs": pairs, "wins": wins, "ties": ties, "n": n,
            "p_value": sign_test(wins, n) if n else 1.0}


# -- protocol ---------------------------------------------------------------------------

def _cell_name(kind: GuidanceKind, t_g: int, seed: int) -> str:
    return f"{kind.value}_tg{t_g}_s{seed}"


def cell_schedule(kind: GuidanceKind, t_g: int, duration: int) -> GuidanceSchedule:
    if kind is GuidanceKind.SPARSE:
        return GuidanceSchedule(GuidanceKind.SPARSE, t_g, 0)
    return GuidanceSchedule(kind, t_g, duration)


def run_cell(run: RunSpec, kind: GuidanceKind, t_g: int, duration: int, seed: int) -> Trainer:
    """One cell trained from scratch; the protocol's branches must match this."""
    return Trainer(run, cell_schedule(kind, t_g, duration), seed).run_until(t_g + duration)


def _finish(trainer: Trainer, kind, t_g, seed, run_dir: Path | None) -> GuidanceResult:
    returns = trainer.last_eval if trainer.last_eval is not None else trainer.evaluate()
    res = EvalResult.from_returns(returns)
    result = GuidanceResult(kind, t_g, seed, res.mean, res.stderr, list(trainer.evals))
    if run_dir is not None:
        cell_dir = run_dir / "cells" / _cell_name(kind, t_g, seed)
        cell_dir.mkdir(parents=True, exist_ok=True)
        trainer.write_metrics(cell_dir / "metrics.csv")
        trainer.save(cell_dir / "final.bin")
        (cell_dir / "result.json").write_text(json.dumps(result.to_dict(), indent=2))
    log.info("cell %s J=%.3f", _cell_name(kind, t_g, seed), result.J)
    return result


def run_protocol(run: RunSpec, experiment: ExperimentConfig, run_dir: str | Path | None = None) -> RunReport:
    """Train every (kind, t_G, seed) cell and select the best guidance.

    All cells of one seed share a single sparse trunk. A guided cell branches
    off it at the last update boundary before t_G, so its guidance still starts
    at exactly t_G; the sparse control for t_G is the trunk finished at
    t_G + D. Each cell is bit-identical to ``run_cell`` with the same inputs.
    """
    experiment.validate()
    if run.senses.modality != experiment.modality:
        raise ConfigError(f"senses modality {run.senses.modality!r} != experiment {experiment.modality!r}")
    run_dir = Path(run_dir) if run_dir is not None else None
    # the experiment decides how many episodes score a cell
    run = replace(run, train=replace(run.train, eval_episodes=experiment.eval_episodes))
    u = run.sac.update_every
    D = experiment.duration_frames
    results: list[GuidanceResult] = []
    try:
        for seed in experiment.seed_list:
            trunk = Trainer(run, GuidanceSchedule(GuidanceKind.SPARSE, 0, 0), seed)
            events = []     # (aligned frame, order, action, t_g)
            for t_g in experiment.t_g_frames:
                for kind in experiment.guidance_kinds:
                    if kind is GuidanceKind.SPARSE:
                        events.append(((t_g + D) // u * u, 1, kind, t_g))
                    else:
                        events.append((t_g // u * u, 0, kind, t_g))
            for frame, _, kind, t_g in sorted(events, key=lambda e: (e[0], e[1], e[3], e[2].order)):
                trunk.run_until(frame, final_eval=False)
                branch = trunk.with_schedule(cell_schedule(kind, t_g, D))
                branch.run_until(t_g + D)
                results.append(_finish(branch, kind, t_g, seed, run_dir))
    except BaseException:
        if run_dir is not None and results:
            _write_report(RunReport(results, optimal_guidance(results)), run_dir, partial=True)
        raise
    report = RunReport(results, optimal_guidance(results))
    if run_dir is not None:
        _write_report(report, run_dir)
    return report


def _write_report(report: RunReport, run_dir: Path, partial: bool = False) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    name = "report.partial.json" if partial else "report.json"
    (run_dir / name).write_text(json.dumps(report.to_dict(), indent=2))
    if not partial:
        summarize(report, run_dir / "summary.csv")


SUMMARY_COLUMNS = ("row", "kind", "t_g", "n_seeds", "mean_J", "stderr_J", "max_J")


def summarize(report: RunReport, path) -> Path:
    """Per-cell J table plus the selected (kind, t_G); sparse rows are the controls."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cells = report.cells()
    with path.open("w", newline="") as fh:
        fh.write("# row: cell or selected; kind: guidance kind (sparse rows are the no-guidance controls)\n")
        fh.write("# t_g: desk frames of sparse pretraining; n_seeds, mean_J, stderr_J, max_J: "
                 "final base-reward eval return across seeds\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for c in cells:
            writer.writerow(["cell", c.kind.value, c.t_g, c.n, repr(c.mean), repr(c.stderr), repr(c.best)])
        kind, t_g = report.selected
        sel = next(c for c in cells if c.kind is kind and c.t_g == t_g)
        writer.writerow(["selected", kind.value, t_g, sel.n, repr(sel.mean), repr(sel.stderr), repr(sel.best)])
    return path


def read_summary(path) -> list[dict]:
    with Path(path).open() as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


# -- trajectories ----------------------------------------------------------------------------

def _svg(record, env: EnvConfig) -> str:
    side = env.room_side
    st = record.state
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {side:g} {side:g}" '
        f'width="360" height="360">',
        # flip y so the plot uses the room's counterclockwise frame
        f'<g transform="translate(0 {side:g}) scale(1 -1)">',
        f'<rect x="0" y="0" width="{side:g}" height="{side:g}" fill="white" stroke="black" stroke-width="0.05"/>',
    ]
    for i, obj in enumerate(st.objects):
        color = "green" if i == st.target_index else "red"
        x, y = obj.position
        parts.append(f'<circle cx="{x:.4f}" cy="{y:.4f}" r="{env.reach_radius:g}" fill="none" '
                     f'stroke="{color}" stroke-width="0.05" stroke-dasharray="0.2 0.2"/>')
        parts.append(f'<circle cx="{x:.4f}" cy="{y:.4f}" r="{obj.radius:g}" fill="{color}"/>')
    pts = " ".join(f"{p.x:.4f},{p.y:.4f}" for p in record.poses)
    parts.append(f'<polyline points="{pts}" fill="none" stroke="blue" stroke-width="0.08"/>')
    p0 = record.poses[0]
    parts.append(f'<circle cx="{p0.x:.4f}" cy="{p0.y:.4f}" r="0.25" fill="black"/>')
    parts.append("</g></svg>")
    return "\n".join(parts) + "\n"


def export_trajectories(model, n_episodes: int, path, seed: int = 0, env: EnvConfig | None = None,
                        senses: SenseParams | None = None) -> list[Path]:
    """One SVG per episode plus ``poses.csv``; returns the written files."""
    if isinstance(model, TrainedModel):
        actor = PolicyActor(Network(model.spec), model.params, deterministic=True)
        env, senses = model.env, model.senses
    else:
        if env is None or senses is None:
            raise ValueError("env and senses are required when plotting a bare actor")
        actor = model
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    records = run_episodes(actor, env, senses, n_episodes, np.random.SeedSequence([int(seed), EVAL_SEED_TAG]),
                           record_poses=True)
    written = []
    with (out / "poses.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("episode", "step", "x", "y", "heading", "reach"))
        for i, rec in enumerate(records):
            for k, p in enumerate(rec.poses):
                writer.writerow((i, k, repr(p.x), repr(p.y), repr(p.heading), rec.reach.value))
    written.append(out / "poses.csv")
    for i, rec in enumerate(records):
        f = out / f"episode_{i:03d}.svg"
        f.write_text(_svg(rec, env))
        written.append(f)
    return written


__all__ = [
    "CellStats", "EvalResult", "ExperimentConfig", "GuidanceResult", "RunReport", "SUMMARY_COLUMNS",
    "cell_schedule", "eval_policy", "export_trajectories", "guidance_vs_control", "optimal_guidance",
    "random_baseline", "read_summary", "run_cell", "run_protocol", "sign_test", "summarize",
]
