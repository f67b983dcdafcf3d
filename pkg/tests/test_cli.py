import json
import os

import numpy as np
import pytest

from quadmimic.cli import main
from quadmimic.datagen import Task, TaskSpec, gen_human_clip, gen_robot_clip
from quadmimic.motion import load_clip, save_human_clip
from quadmimic.retarget import save_bundle

DATA_CFG = (
    "tasks = tilt_at_stand,manip_at_stand\n"
    "difficulty = 0.6\n"
    "clips_per_task = 3\n"
    "style_seed = 1\n"
    "pairs_per_task = 120\n"
)


def _tree_bytes(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for name in sorted(files):
            path = os.path.join(dirpath, name)
            out[os.path.relpath(path, root)] = open(path, "rb").read()
    return out


@pytest.fixture(scope="module")
def bundle_dir(tmp_path_factory, experts):
    path = tmp_path_factory.mktemp("bundle")
    save_bundle(experts, path)
    return path


def test_gen_data_reruns_byte_identical(tmp_path):
    cfg = tmp_path / "data.cfg"
    cfg.write_text(DATA_CFG)
    assert main(["--deterministic", "gen-data", "--config", str(cfg), "--seed", "5", "--out", str(tmp_path / "a")]) == 0
    assert main(["--deterministic", "gen-data", "--config", str(cfg), "--seed", "5", "--out", str(tmp_path / "b")]) == 0
    a, b = _tree_bytes(tmp_path / "a"), _tree_bytes(tmp_path / "b")
    assert a.keys() == b.keys()
    assert all(a[k] == b[k] for k in a)


def test_gen_data_empty_tasks_is_data_error(tmp_path):
    cfg = tmp_path / "empty.cfg"
    cfg.write_text("tasks =  \n")
    assert main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 2


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["definitely-not-a-command"])
    assert exc.value.code == 1


def test_train_retarget_missing_dataset(tmp_path):
    assert main(["train-retarget", "--dataset", str(tmp_path / "nope.jsonl"), "--state", "stand",
                 "--out", str(tmp_path / "o")]) == 2


def test_retarget_stream_outputs(tmp_path, bundle_dir, model):
    clip = gen_robot_clip(TaskSpec(Task.MANIP_AT_STAND, 0.7), 3.0, np.random.default_rng(50), model)
    human = gen_human_clip(clip, 1, model=model)
    human_path = tmp_path / "human.jsonl"
    save_human_clip(human, human_path)
    out = tmp_path / "motion.jsonl"
    assert main(["--deterministic", "retarget", "--bundle", str(bundle_dir), "--input", str(human_path),
                 "--out", str(out), "--report", str(tmp_path / "report.json")]) == 0
    motion = load_clip(out)
    assert len(motion) == len(human)
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["velocity_violations"] == 0
    assert report["max_joint_velocity_deg_s"] <= 120.0 + 1e-6


def test_retarget_missing_bundle(tmp_path):
    assert main(["retarget", "--bundle", str(tmp_path / "nothing"), "--input", str(tmp_path / "x.jsonl"),
                 "--out", str(tmp_path / "y.jsonl")]) == 2


def test_workspace_outputs_and_zero_tilt(tmp_path):
    out = tmp_path / "ws"
    assert main(["--deterministic", "workspace", "--tilt-deg", "0", "--joint-samples", "15", "--out", str(out)]) == 0
    summary = json.loads((out / "workspace.json").read_text())
    assert summary["volume_ratio"] == 1.0
    assert (out / "fixed_cloud.csv").exists() and (out / "tilt_cloud.csv").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "workspace"
    assert manifest["timestamp"] == "1970-01-01T00:00:00Z"


def test_train_policy_small_run_and_log(tmp_path):
    out = tmp_path / "pol"
    assert main(["--deterministic", "train-policy", "--state", "stand", "--out", str(out),
                 "--total-steps", "256", "--n-envs", "4", "--seed", "3", "--no-dr"]) == 0
    log = (out / "train_log.csv").read_text().splitlines()
    assert log[0].startswith("iteration,steps,mean_reward,stage")
    assert len(log) >= 2
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["domain_mode"] == "nominal"
    stages = [int(line.split(",")[3]) for line in log[1:]]
    assert stages == sorted(stages)


def test_ablate_small_run(tmp_path, bundle_dir):
    out = tmp_path / "abl"
    assert main(["--deterministic", "ablate", "--bundle", str(bundle_dir), "--episodes", "2",
                 "--duration", "4", "--seed", "2", "--out", str(out)]) == 0
    rows = (out / "success_ratios.csv").read_text().splitlines()
    assert rows[0] == "variant,state,episodes,mean_ratio,mean_reward,terminations"
    assert len(rows) == 4  # three variants
    episodes = (out / "episodes.csv").read_text().splitlines()
    assert len(episodes) == 1 + 3 * 2


def test_workspace_rerun_byte_identical(tmp_path):
    for name in ("w1", "w2"):
        assert main(["--deterministic", "workspace", "--tilt-deg", "15", "--joint-samples", "13",
                     "--tilt-samples", "3", "--out", str(tmp_path / name)]) == 0
    a, b = _tree_bytes(tmp_path / "w1"), _tree_bytes(tmp_path / "w2")
    assert a == b
