"""Command-line behavior: parsing, exit codes, and artifact plumbing."""

from __future__ import annotations

import json

import numpy as np
import pytest

from deskbot import datakit
from deskbot.cli import build_parser, main, session_dirs
from deskbot.neuralnet.policy import DrivingPolicy, PolicyArch, count_params
from deskbot.neuralnet.weights_io import save_policy
from deskbot.simcore import CameraConfig

CAM_DOC = {"camera": {"width": 64, "height": 24}}


@pytest.fixture()
def cam_config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(CAM_DOC))
    return str(path)


# ----------------------------------------------------------------- parsing


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert capsys.readouterr().out.startswith("deskbot ")


def test_missing_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_unknown_route_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["collect", "--route", "R9"])
    assert exc.value.code == 2


def test_parser_covers_all_subcommands():
    parser = build_parser()
    actions = [a for a in parser._actions if a.dest == "command"]
    assert set(actions[0].choices) == {
        "sim", "collect", "train", "eval", "follow", "params", "proto-fuzz",
    }


# ------------------------------------------------------------------ params


def test_params_lists_ours_and_baselines(capsys):
    assert main(["params"]) == 0
    out = capsys.readouterr().out
    assert "ours" in out and "1,285,026" in out
    # Baselines from the comparison table appear alongside.
    assert out.count(",") > 4


def test_params_reduced_resolution(capsys):
    assert main(["params", "--width", "128", "--height", "48"]) == 0
    assert "760,738" in capsys.readouterr().out


# ------------------------------------------------------------------- fuzz


def test_proto_fuzz_reports_zero_crashes(capsys):
    assert main(["proto-fuzz", "--lines", "2000", "--seed", "7"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["lines"] == 2000
    assert doc["crashes"] == 0


# ---------------------------------------------------------------- collect


def test_collect_writes_session(tmp_path, cam_config, capsys):
    rc = main([
        "collect", "--route", "R2", "--minutes", "0.05", "--noise",
        "--seed", "3", "--out", str(tmp_path), "--config", cam_config,
    ])
    assert rc == 0
    printed = capsys.readouterr().out.strip()
    session = datakit.load_session(printed)
    assert len(session.records) == 60
    assert session.meta["route"] == "R2"


def test_collect_runtime_failure_is_exit_one(tmp_path, cam_config, capsys):
    (tmp_path / "r2-s0003").mkdir()  # occupy the target session name
    rc = main([
        "collect", "--route", "R2", "--minutes", "0.05", "--seed", "3",
        "--out", str(tmp_path), "--config", cam_config,
    ])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


# ----------------------------------------------------------- train + eval


def test_session_dirs_discovery(tmp_path):
    a = datakit.collect(tmp_path, "R2", 0.02, noise=False, seed=0,
                        camera=CameraConfig(width=64, height=24))
    assert session_dirs(tmp_path) == [a]
    assert session_dirs(a) == [a]  # a session dir is its own root
    (tmp_path / "not-a-session").mkdir()
    assert session_dirs(tmp_path) == [a]


def test_train_and_eval_roundtrip(tmp_path, cam_config, capsys):
    data = tmp_path / "data"
    for seed in (0, 1):
        datakit.collect(data, "R2", 0.05, noise=False, seed=seed,
                        camera=CameraConfig(width=64, height=24))
    cfg = tmp_path / "train.json"
    cfg.write_text(json.dumps({
        **CAM_DOC,
        "epochs": 1,
        "batch_size": 32,
        "augment": False,
    }))
    runs = tmp_path / "runs"
    rc = main([
        "train", "--data", str(data), "--config", str(cfg), "--out", str(runs),
    ])
    out = capsys.readouterr().out
    assert rc == 0
    assert "best epoch 1" in out
    weights = runs / "policy.obnw"
    assert weights.is_file()

    reports = tmp_path / "reports"
    rc = main([
        "eval", "--route", "EVAL2", "--weights", str(weights), "--trials", "1",
        "--config", cam_config, "--out", str(reports),
    ])
    out = capsys.readouterr().out
    assert rc == 0
    doc = json.loads((reports / "report.json").read_text())
    assert doc["route"] == "EVAL2"
    assert doc["label"] == "policy"
    assert doc["param_count"] == count_params(
        DrivingPolicy(PolicyArch(input_width=64, input_height=24), seed=0)
    )
    assert len(doc["trials"]) == 1
    assert (reports / "report.md").is_file()


def test_train_without_sessions_is_exit_one(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    rc = main(["train", "--data", str(tmp_path / "empty")])
    assert rc == 1
    assert "no sessions" in capsys.readouterr().err


def test_eval_expert_smoke(tmp_path, cam_config, capsys):
    rc = main([
        "eval", "--route", "EVAL2", "--trials", "1", "--seed", "0",
        "--config", cam_config, "--out", str(tmp_path / "rep"),
    ])
    assert rc == 0
    doc = json.loads((tmp_path / "rep" / "report.json").read_text())
    assert doc["label"] == "expert"
    assert doc["aggregate"]["success_pct_mean"] == 100.0
    assert doc["aggregate"]["fps_mean"] is None  # no --timing


def test_eval_missing_weights_is_exit_one(tmp_path, capsys):
    rc = main([
        "eval", "--weights", str(tmp_path / "nope.obnw"), "--trials", "1",
        "--out", str(tmp_path / "rep"),
    ])
    assert rc == 1


# ------------------------------------------------------------------ follow


def test_follow_prints_per_seed_lines(capsys):
    rc = main(["follow", "--duration", "2.0", "--trials", "2", "--seed", "5"])
    assert rc == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if l.startswith("seed")]
    assert len(lines) == 2
    assert lines[0].startswith("seed 5:") and lines[1].startswith("seed 6:")
