import json

import pytest

from critlab.cli import main
from critlab.config import ConfigError, apply_overrides, load_config

from conftest import TINY


def _set(*items):
    out = []
    for item in items:
        out += ["--set", item]
    return out


def test_overrides_parse_json():
    cfg = apply_overrides({"a": {"b": 1}}, ["a.b=2.5", "a.c=[1,2]", "d=hello", "e.f=true"])
    assert cfg == {"a": {"b": 2.5, "c": [1, 2]}, "d": "hello", "e": {"f": True}}
    with pytest.raises(ConfigError):
        apply_overrides({}, ["novalue"])
    with pytest.raises(ConfigError):
        apply_overrides({"a": 1}, ["a.b=2"])


def test_config_file_merges_defaults(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"env": {"n_objects": 1}, "seed": 4}))
    cfg = load_config(path, ["seed=5"])
    assert cfg["env"]["n_objects"] == 1 and cfg["env"]["room_side"] == 18.0 and cfg["seed"] == 5


def test_train_writes_run_dir(tmp_path, capsys):
    rc = main(["train", "--run-dir", str(tmp_path)] + _set(*TINY, "total_frames=256", "schedule.kind=helper",
                                                             "schedule.duration_frames=128"))
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["evals"][-1][0] == 256
    for name in ("config.json", "metrics.csv", "final.bin", "schedule.json"):
        assert (tmp_path / name).exists()
    rc = main(["eval", "--checkpoint", str(tmp_path / "final.bin"), "--episodes", "3"] + _set(*TINY))
    assert rc == 0 and "success_rate" in json.loads(capsys.readouterr().out)


def test_eval_and_plot_scripted(tmp_path, capsys):
    assert main(["eval", "--policy", "mentor", "--episodes", "10", "--set", "env.n_objects=1"]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["success_rate"] >= 0.8 and res["mean"] > res["random_mean"]
    assert main(["plot", "--policy", "random", "--episodes", "2", "--run-dir", str(tmp_path)]) == 0
    assert len(json.loads(capsys.readouterr().out)["files"]) == 3


def test_oracle_command(tmp_path, capsys):
    assert main(["oracle", "--worlds", "2", "--run-dir", str(tmp_path)]) == 0
    assert json.loads(capsys.readouterr().out)["all_policies_equal"]
    assert (tmp_path / "oracle.json").exists()


def test_probe_command(tmp_path, capsys):
    ds = tmp_path / "ds.bin"
    args = ["probe", "--untrained", "--dataset", str(ds)] + _set("probe.n_per_class=5", "probe.epochs=2",
                                                                  "probe.head_seeds=[0]")
    assert main(args) == 0
    first = json.loads(capsys.readouterr().out)
    assert ds.exists() and first[0]["label"] == "untrained"
    assert main(args) == 0
    assert json.loads(capsys.readouterr().out) == first


def test_errors_exit_2(tmp_path, capsys):
    assert main(["train", "--set", "env.n_objects=3"]) == 2
    assert main(["train", str(tmp_path / "missing.json")]) == 2
    assert main(["eval", "--set", "sac.bogus=1"]) == 2
    assert main(["probe"]) == 2
    assert "critlab: error" in capsys.readouterr().err
