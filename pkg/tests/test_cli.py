"""End-to-end CLI: every verb, exit codes, artifact files."""
import json
from pathlib import Path

import pytest

from noisydet import SceneConfig, build_dataset, load_dataset, save_dataset
from noisydet.cli import main

SCENE = dict(image_size=64, seed=41)


@pytest.fixture
def workspace(tmp_path):
    scene = SceneConfig(**SCENE)
    ds = build_dataset(scene, 4)
    val = build_dataset(scene, 2, first_index=1000)
    save_dataset(ds, tmp_path / "train.json")
    save_dataset(val, tmp_path / "val.json")
    (tmp_path / "scene.json").write_text(json.dumps(SCENE))
    (tmp_path / "det.json").write_text(json.dumps(
        {"image_size": 64, "channels": 8, "epochs": 1, "batch_size": 4}))
    return tmp_path


def test_synthesize_writes_noisy_dataset(workspace):
    rc = main([
        "synthesize", "--in", str(workspace / "train.json"),
        "--out", str(workspace / "noisy.json"),
        "--kind", "class_shift", "--level", "0.3", "--seed", "1",
        "--report", str(workspace / "report.json"),
    ])
    assert rc == 0
    noisy = load_dataset(workspace / "noisy.json")
    clean = load_dataset(workspace / "train.json")
    assert len(noisy.annotations) == len(clean.annotations)
    report = json.loads((workspace / "report.json").read_text())
    assert report["class_shift_rate"] > 0


def test_synthesize_bad_level_exits_1(workspace, capsys):
    rc = main([
        "synthesize", "--in", str(workspace / "train.json"),
        "--out", str(workspace / "noisy.json"),
        "--kind", "missing", "--level", "7",
    ])
    assert rc == 1
    assert "error" in capsys.readouterr().err


def test_train_eval_round_trip(workspace):
    rc = main([
        "train", "--data", str(workspace / "train.json"),
        "--scene-config", str(workspace / "scene.json"),
        "--det-config", str(workspace / "det.json"),
        "--out", str(workspace / "run"),
    ])
    assert rc == 0
    for name in ("model.pt", "metrics.jsonl", "dcm.json", "registry.json", "rbr_targets.json"):
        assert (workspace / "run" / name).exists()

    rc = main([
        "eval", "--model", str(workspace / "run" / "model.pt"),
        "--data", str(workspace / "val.json"),
        "--scene-config", str(workspace / "scene.json"),
        "--out", str(workspace / "eval.json"),
    ])
    assert rc == 0
    result = json.loads((workspace / "eval.json").read_text())
    assert set(result) == {"mAP", "AP50", "AP75", "AP_vt", "AP_t", "AP_s", "AP_m"}
    assert all(0.0 <= v <= 1.0 for v in result.values())


def test_sweep_and_plot(workspace):
    spec = {
        "kinds": ["class_shift"],
        "levels": [0.0, 0.3],
        "seeds": [0],
        "n_train": 3,
        "n_val": 2,
        "scene": SCENE,
        "detector": {"image_size": 64, "channels": 8, "epochs": 1, "batch_size": 4},
    }
    (workspace / "spec.json").write_text(json.dumps(spec))
    rc = main(["sweep", "--spec", str(workspace / "spec.json"),
               "--out", str(workspace / "sweep")])
    assert rc == 0
    assert (workspace / "sweep" / "results.jsonl").exists()
    assert (workspace / "sweep" / "results.csv").exists()

    rc = main(["plot", "--results", str(workspace / "sweep" / "results.jsonl"),
               "--out", str(workspace / "figs")])
    assert rc == 0
    assert (workspace / "figs" / "noise_impact.png").exists()


def test_sweep_partial_failure_exits_2(workspace):
    spec = {
        "kinds": ["missing"],
        "levels": [0.1],
        "seeds": [0],
        "n_train": 3,
        "n_val": 2,
        "scene": SCENE,
        "detector": {"image_size": 64, "channels": 8, "epochs": 2,
                     "batch_size": 4, "lr": 1e30},  # diverges
    }
    (workspace / "spec.json").write_text(json.dumps(spec))
    rc = main(["sweep", "--spec", str(workspace / "spec.json"),
               "--out", str(workspace / "sweep2")])
    assert rc == 2


def test_missing_file_exits_1(tmp_path, capsys):
    rc = main(["eval", "--model", str(tmp_path / "nope.pt"),
               "--data", str(tmp_path / "nope.json")])
    assert rc == 1
