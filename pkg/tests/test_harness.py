import json
import math
import random

import numpy as np
import pytest

from critlab.config import ConfigError, EnvConfig, SenseParams
from critlab.guidance import GuidanceKind
from critlab.harness import (
    EvalResult,
    ExperimentConfig,
    GuidanceResult,
    RunReport,
    eval_policy,
    export_trajectories,
    guidance_vs_control,
    optimal_guidance,
    random_baseline,
    read_summary,
    run_cell,
    run_protocol,
    sign_test,
)
from critlab.learners import ConstantActor, MentorActor

H, S, B = GuidanceKind.HELPER, GuidanceKind.SPARSE, GuidanceKind.BEHAVIOR_CLONE

# (kind, t_G in full-scale frames, best J over seeds)
TABLE = [(S, 1_000_000, 0.2), (S, 2_000_000, 0.3), (H, 1_000_000, 0.5), (H, 2_000_000, 0.8),
         (H, 3_000_000, 0.6), (B, 2_000_000, 0.4), (S, 3_000_000, 0.1)]


def _results(table, seeds=(0, 1)):
    out = []
    for kind, t_g, best in table:
        out.append(GuidanceResult(kind, t_g, seeds[0], best))
        for s in seeds[1:]:
            out.append(GuidanceResult(kind, t_g, s, best - 0.1 * s))
    return out


def test_optimal_guidance_table():
    assert optimal_guidance(_results(TABLE)) == (H, 2_000_000)


def test_optimal_guidance_permutation_invariant():
    rng = random.Random(0)
    for _ in range(100):
        table = [(rng.choice([S, H, B]), rng.choice([1, 2, 3, 4]) * 1_000_000, rng.choice([0.1, 0.2, 0.5]))
                 for _ in range(8)]
        res = _results(table)
        want = optimal_guidance(res)
        rng.shuffle(res)
        assert optimal_guidance(res) == want


def test_optimal_guidance_ties_and_empty():
    res = [GuidanceResult(H, 20, 0, 1.0), GuidanceResult(S, 10, 0, 1.0), GuidanceResult(H, 10, 0, 1.0)]
    assert optimal_guidance(res) == (S, 10)
    with pytest.raises(ValueError):
        optimal_guidance([])


def test_sign_test_values():
    assert sign_test(10, 12) == pytest.approx(79 / 4096)
    assert sign_test(9, 12) == pytest.approx(299 / 4096)
    assert sign_test(0, 5) == 1.0


def test_guidance_vs_control_pairs():
    res = [GuidanceResult(H, 10, 0, 0.5), GuidanceResult(S, 10, 0, 0.1),
           GuidanceResult(H, 10, 1, 0.1), GuidanceResult(S, 10, 1, 0.1),
           GuidanceResult(H, 20, 0, 0.0), GuidanceResult(S, 20, 0, 0.3)]
    out = guidance_vs_control(RunReport(res, optimal_guidance(res)))
    assert (out["wins"], out["ties"], out["n"]) == (1, 1, 2)
    assert out["p_value"] == pytest.approx(0.75)


def test_report_round_trip():
    res = _results(TABLE)
    rep = RunReport(res, optimal_guidance(res))
    back = RunReport.from_dict(json.loads(json.dumps(rep.to_dict())))
    assert back.selected == rep.selected and back.cells() == rep.cells()


def test_eval_result_stats():
    r = EvalResult.from_returns([1.0, -1.0, 0.0, 1.0])
    assert r.mean == 0.25 and r.success_rate == 0.5
    assert r.stderr == pytest.approx(np.std([1, -1, 0, 1], ddof=1) / 2)


def test_experiment_config():
    exp = ExperimentConfig()
    assert exp.t_g_frames == [10_000, 20_000, 30_000, 40_000] and exp.duration_frames == 20_000
    with pytest.raises(ConfigError):
        ExperimentConfig(kinds=("sparse", "nope")).validate()
    with pytest.raises(ConfigError):
        ExperimentConfig(seeds=0).validate()


def test_random_and_mentor_baselines():
    env, sp = EnvConfig(n_objects=1), SenseParams()
    rnd = random_baseline(env, sp, 60)
    men = eval_policy(MentorActor(sp), 60, 0, env, sp)
    assert men.success_rate > 0.9 and men.mean > rnd.mean + 5 * rnd.stderr
    still = eval_policy(ConstantActor(0, 0), 10, 0, env, sp)
    assert still.mean == 0.0 and still.success_rate == 0.0
    with pytest.raises(ValueError):
        eval_policy(MentorActor(sp), 0, 0, env, sp)
    with pytest.raises(ValueError):
        eval_policy(MentorActor(sp), 3, 0)


def test_protocol_cells_match_fresh_runs(tiny_run, tmp_path):
    run = tiny_run()
    exp = ExperimentConfig(full_t_g=(10_000, 20_000), full_duration=30_000, seeds=1,
                           eval_episodes=4, kinds=("sparse", "helper", "bc"))
    report = run_protocol(run, exp, tmp_path)
    assert len(report.results) == 6
    for r in report.results:
        fresh = run_cell(run, r.kind, r.t_g, exp.duration_frames, r.seed)
        assert r.J == float(fresh.last_eval.mean())
        cell = tmp_path / "cells" / f"{r.kind.value}_tg{r.t_g}_s{r.seed}"
        assert (cell / "metrics.csv").read_text() == fresh.metrics_csv()
    rows = read_summary(tmp_path / "summary.csv")
    assert rows[-1]["row"] == "selected" and len(rows) == 7
    assert (rows[-1]["kind"], int(rows[-1]["t_g"])) == (report.selected[0].value, report.selected[1])
    assert json.loads((tmp_path / "report.json").read_text())["selected"]["t_g"] == report.selected[1]


def test_protocol_rejects_modality_mismatch(tiny_run):
    with pytest.raises(ConfigError):
        run_protocol(tiny_run(), ExperimentConfig(modality="multimodal"))


def test_export_trajectories(tmp_path):
    env, sp = EnvConfig(), SenseParams()
    files = export_trajectories(MentorActor(sp), 3, tmp_path, env=env, senses=sp)
    assert [f.name for f in files] == ["poses.csv", "episode_000.svg", "episode_001.svg", "episode_002.svg"]
    svg = files[1].read_text()
    assert svg.startswith("<svg") and "scale(1 -1)" in svg and "<polyline" in svg
    lines = files[0].read_text().splitlines()
    assert lines[0] == "episode,step,x,y,heading,reach" and len(lines) > 3
    assert math.isfinite(float(lines[1].split(",")[2]))
