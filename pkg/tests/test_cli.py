import json
import os
import subprocess
import sys

import numpy as np
import pytest

CLI = [sys.executable, "-m", "reachgen.cli"]


def run_cli(*args, env_extra=None, cwd=None):
    env = os.environ.copy()
    env.pop("REACHGEN_SEED", None)
    if env_extra:
        env.update(env_extra)
    return subprocess.run(CLI + list(args), capture_output=True, text=True,
                          env=env, cwd=cwd)


@pytest.fixture(scope="module")
def tiny_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "tiny.json"
    path.write_text(json.dumps({
        "data": {"n_locomotion": 8, "n_reaching": 5, "n_walk_reach": 2},
        "train": {"epochs": 2, "batch_size": 8, "windows_per_sequence": 1},
        "eval": {"n_angles": 2, "n_heights": 1, "n_distances": 1,
                 "height_range": [1.0, 1.0], "distance_range": [0.8, 0.8],
                 "n_initial_poses": 1, "samples_per_pair": 2, "duration": 20},
    }))
    return str(path)


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory, tiny_config):
    out = str(tmp_path_factory.mktemp("runs") / "data")
    r = run_cli("gen-data", "--config", tiny_config, "--seed", "3", "--out", out)
    assert r.returncode == 0, r.stderr
    return out


@pytest.fixture(scope="module")
def checkpoint(tmp_path_factory, tiny_config, data_dir):
    out = str(tmp_path_factory.mktemp("runs") / "train")
    r = run_cli("train", "--config", tiny_config, "--seed", "3",
                "--data", data_dir, "--out", out)
    assert r.returncode == 0, r.stderr
    return os.path.join(out, "checkpoint.ckpt")


def test_gen_data_outputs(data_dir):
    manifest = json.loads(open(os.path.join(data_dir, "manifest.json")).read())
    assert len(manifest["sequences"]) >= 10
    assert os.path.exists(os.path.join(data_dir, "resolved_config.json"))
    assert os.path.exists(os.path.join(data_dir, "skeleton.json"))


def test_train_outputs(checkpoint):
    out = os.path.dirname(checkpoint)
    log = open(os.path.join(out, "train_log.csv")).read()
    assert "epoch,s,rec,kl,joint,total,lr" in log
    resolved = json.loads(open(os.path.join(out, "resolved_config.json")).read())
    assert resolved["resolved"]["seed"] == 3
    assert "manifest" in resolved["input_hashes"]


def test_generate_writes_motion_and_sidecar(tmp_path, checkpoint):
    out = str(tmp_path / "gen")
    r = run_cli("generate", "--checkpoint", checkpoint, "--goal", "1.0,0.5,1.2",
                "--duration", "15", "--seed", "7", "--out", out)
    assert r.returncode == 0, r.stderr
    for name in ("motion.mot", "motion.lat", "motion.csv", "resolved_config.json"):
        assert os.path.exists(os.path.join(out, name)), name


def test_generate_deterministic(tmp_path, checkpoint):
    outs = []
    for name in ("a", "b"):
        out = str(tmp_path / name)
        r = run_cli("generate", "--checkpoint", checkpoint, "--goal", "1.0,0.5,1.2",
                    "--duration", "12", "--seed", "9", "--out", out)
        assert r.returncode == 0, r.stderr
        outs.append(out)
    a = open(os.path.join(outs[0], "motion.mot"), "rb").read()
    b = open(os.path.join(outs[1], "motion.mot"), "rb").read()
    assert a == b


def test_evaluate_deterministic_across_workers(tmp_path, tiny_config, checkpoint):
    reports = []
    for name, workers in (("w1", "1"), ("w1b", "1"), ("w4", "4")):
        out = str(tmp_path / name)
        r = run_cli("evaluate", "--config", tiny_config, "--checkpoint", checkpoint,
                    "--seed", "11", "--workers", workers, "--out", out)
        assert r.returncode == 0, r.stderr
        reports.append(open(os.path.join(out, "report.csv"), "rb").read())
    assert reports[0] == reports[1]
    assert reports[0] == reports[2]


def test_inspect_prints_summary(tmp_path, checkpoint, data_dir):
    manifest = json.loads(open(os.path.join(data_dir, "manifest.json")).read())
    labeled = next(e for e in manifest["sequences"] if e["labeled"])
    motion = os.path.join(data_dir, "motions", f"{labeled['ident']}.mot")
    r = run_cli("inspect", motion)
    assert r.returncode == 0
    assert "fps: 30.0" in r.stdout
    assert "label: goal=" in r.stdout
    r2 = run_cli("inspect", motion, "--goal", "0.5,0.5,1.0")
    assert "dtg_m:" in r2.stdout


def test_inspect_corrupt_file_nonzero(tmp_path):
    bad = tmp_path / "bad.mot"
    bad.write_bytes(b"not a motion file")
    r = run_cli("inspect", str(bad))
    assert r.returncode != 0
    assert r.stderr.startswith("error code=")


def test_missing_checkpoint_nonzero(tmp_path):
    r = run_cli("generate", "--checkpoint", str(tmp_path / "nope.ckpt"),
                "--goal", "1,1,1", "--out", str(tmp_path / "o"))
    assert r.returncode != 0
    assert "error code=" in r.stderr


def test_env_seed_override(tmp_path, tiny_config):
    out = str(tmp_path / "env")
    r = run_cli("gen-data", "--config", tiny_config, "--out", out,
                env_extra={"REACHGEN_SEED": "77"})
    assert r.returncode == 0, r.stderr
    resolved = json.loads(open(os.path.join(out, "resolved_config.json")).read())
    assert resolved["resolved"]["seed"] == 77


def test_flag_beats_env(tmp_path, tiny_config):
    out = str(tmp_path / "flag")
    r = run_cli("gen-data", "--config", tiny_config, "--seed", "5", "--out", out,
                env_extra={"REACHGEN_SEED": "77"})
    assert r.returncode == 0, r.stderr
    resolved = json.loads(open(os.path.join(out, "resolved_config.json")).read())
    assert resolved["resolved"]["seed"] == 5


def test_unknown_flag_usage_error():
    r = run_cli("train", "--nonsense")
    assert r.returncode != 0
