"""Command-line entry point: ``critlab <subcommand> [config.json] [--set key=value ...]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, build, load_config
from .guidance import GuidanceKind, GuidanceSchedule
from .harness import (
    ExperimentConfig,
    eval_policy,
    export_trajectories,
    guidance_vs_control,
    random_baseline,
    run_protocol,
)
from .learners.rollout import ConstantActor, MentorActor, RandomActor
from .learners.train import RunSpec, TrainedModel, train
from .netcore import init_params, load_checkpoint
from .oracle import oracle_report
from .transfer import generate_probe_dataset, load_dataset, probe_sweep, save_dataset


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", nargs="?", help="JSON config file (defaults apply to missing keys)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry, e.g. --set sac.gradient_steps=32")
    p.add_argument("--run-dir", type=Path, default=None, help="output directory")


def _snapshot(config: dict, run_dir: Path | None) -> None:
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "config.json").write_text(json.dumps(config, indent=2, sort_keys=True))


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, default=str))


def _policy(args, run: RunSpec, seed: int):
    """The model named on the command line: a checkpoint or a scripted policy."""
    if args.checkpoint:
        spec, params = load_checkpoint(args.checkpoint)
        if spec.hash != run.network.hash:
            raise ConfigError("checkpoint network spec does not match the config's senses/network")
        return TrainedModel(spec, params, run.env, run.senses)
    return {"mentor": MentorActor(run.senses), "random": RandomActor(), "still": ConstantActor(0.0, 0.0),
            "untrained": TrainedModel(run.network, init_params(run.network, seed), run.env, run.senses),
            }[args.policy]


def cmd_train(args, config: dict) -> int:
    run = RunSpec.from_config(config)
    schedule = GuidanceSchedule.from_dict(config["schedule"])
    run_dir = args.run_dir or Path("runs") / f"train_{schedule.kind.value}_s{config['seed']}"
    _snapshot(config, run_dir)
    trainer = train(run, schedule, int(config["total_frames"]), int(config["seed"]), run_dir)
    _emit({"run_dir": str(run_dir), "evals": trainer.evals})
    return 0


def cmd_sweep(args, config: dict) -> int:
    experiment = build(ExperimentConfig, config.get("experiment"))
    config["senses"]["modality"] = experiment.modality
    run = RunSpec.from_config(config)
    run_dir = args.run_dir or Path("runs") / "sweep"
    _snapshot(config, run_dir)
    report = run_protocol(run, experiment, run_dir)
    out = {"selected": {"kind": report.selected[0].value, "t_g": report.selected[1]},
           "summary": str(run_dir / "summary.csv")}
    for kind in experiment.guidance_kinds:
        if kind is not GuidanceKind.SPARSE and GuidanceKind.SPARSE in experiment.guidance_kinds:
            test = guidance_vs_control(report, kind)
            out[f"{kind.value}_vs_sparse"] = {k: test[k] for k in ("wins", "ties", "n", "p_value")}
    _emit(out)
    return 0


def cmd_eval(args, config: dict) -> int:
    run = RunSpec.from_config(config)
    seed = int(config["seed"])
    model = _policy(args, run, seed)
    res = eval_policy(model, args.episodes, seed, run.env, run.senses)
    base = random_baseline(run.env, run.senses, args.episodes, seed)
    _emit({"mean": res.mean, "stderr": res.stderr, "success_rate": res.success_rate,
           "random_mean": base.mean, "random_stderr": base.stderr})
    return 0


def cmd_plot(args, config: dict) -> int:
    run = RunSpec.from_config(config)
    seed = int(config["seed"])
    out = (args.run_dir or Path("runs") / "plots") / "trajectories"
    files = export_trajectories(_policy(args, run, seed), args.episodes, out, seed, run.env, run.senses)
    _emit({"files": [str(f) for f in files]})
    return 0


def cmd_oracle(args, config: dict) -> int:
    report = oracle_report(seed=int(config["seed"]), n_worlds=args.worlds)
    if args.run_dir is not None:
        args.run_dir.mkdir(parents=True, exist_ok=True)
        (args.run_dir / "oracle.json").write_text(json.dumps(report, indent=2))
    _emit(report)
    return 0


def cmd_probe(args, config: dict) -> int:
    run = RunSpec.from_config(config)
    pc = config["probe"]
    if args.dataset and Path(args.dataset).exists():
        ds = load_dataset(args.dataset)
    else:
        ds = generate_probe_dataset(int(pc["n_per_class"]), int(pc["seed"]), run.senses, run.env)
        if args.dataset:
            save_dataset(args.dataset, ds)
    entries = list(args.checkpoints)
    if args.untrained:
        entries.append(("untrained", run.network, init_params(run.network, int(config["seed"]))))
    if not entries:
        raise ConfigError("give at least one checkpoint or --untrained")
    ranking = probe_sweep(entries, ds, seeds=tuple(pc["head_seeds"]), epochs=int(pc["epochs"]), lr=float(pc["lr"]))
    _emit([{"label": r.label, "mean": r.mean, "stderr": r.stderr, "accuracies": r.accuracies} for r in ranking])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="critlab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one cell")
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="run the full (kind, t_G, seed) protocol")
    _common(p)
    p.set_defaults(func=cmd_sweep)

    for name, func, helptext in (("eval", cmd_eval, "evaluate a policy on the base reward"),
                                 ("plot", cmd_plot, "write trajectory SVGs and a poses CSV")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        p.add_argument("--checkpoint", type=Path, help="checkpoint file; otherwise --policy is used")
        p.add_argument("--policy", choices=("mentor", "random", "still", "untrained"), default="mentor")
        p.add_argument("--episodes", type=int, default=50 if name == "eval" else 8)
        p.set_defaults(func=func)

    p = sub.add_parser("oracle", help="tabular policy-invariance checks as JSON")
    _common(p)
    p.add_argument("--worlds", type=int, default=20)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("probe", help="linear probe of frozen vision encoders")
    _common(p)
    p.add_argument("--checkpoint", dest="checkpoints", action="append", type=Path, default=[],
                   help="checkpoint to probe (repeatable)")
    p.add_argument("--untrained", action="store_true", help="also probe a random-init encoder")
    p.add_argument("--dataset", type=Path, help="dataset cache file (read if present, else written)")
    p.set_defaults(func=cmd_probe)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        config = load_config(args.config, args.overrides)
        return args.func(args, config)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"critlab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
