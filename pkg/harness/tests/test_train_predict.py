import hashlib
import json
import shutil
import subprocess
from pathlib import Path

import pytest

from shapeprobe_harness import (TrainSpec, load_checkpoint, predict_dataset,
                                train)
from shapeprobe_harness.errors import DataError

from conftest import cli, harness_cli


def dir_hashes(path: Path) -> dict[str, str]:
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(path.iterdir())}


@pytest.fixture(scope="module")
def trained(mini_sets, tmp_path_factory):
    """One short real run shared by the mechanics tests."""
    out = tmp_path_factory.mktemp("run")
    spec = TrainSpec(train_dir=str(mini_sets / "train"),
                     val_dir=str(mini_sets / "val"),
                     arch="unet140", out_dir=str(out), epochs=2, seed=3,
                     predict={"val": str(mini_sets / "val"),
                              "rm": str(mini_sets / "rm")})
    log = train(spec)
    return out, spec, log


class TestTrain:
    def test_zero_epochs_still_yields_artifacts(self, mini_sets, tmp_path):
        """An untrained model must already satisfy the output contract."""
        spec = TrainSpec(train_dir=str(mini_sets / "train"),
                         val_dir=str(mini_sets / "val"),
                         arch="unet140", out_dir=str(tmp_path), epochs=0,
                         predict={"val": str(mini_sets / "val")})
        log = train(spec)
        assert log["epochs_run"] == 0
        assert log["early_stopped"] is False
        assert log["best_epoch"] is None and log["best_val_iou"] is None
        assert log["predictions"] == {"val": 8}
        for name in ("checkpoint.pt", "layer_spec.json", "run.json"):
            assert (tmp_path / name).is_file()
        proc = subprocess.run(
            ["shapeprobe", "report", "--gt", str(mini_sets / "val"),
             "--pred", str(tmp_path / "predictions" / "val")],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert "iou" in proc.stdout

    def test_run_log_fields(self, trained):
        out, spec, log = trained
        assert log["epochs_run"] == 2 and log["epochs_requested"] == 2
        assert log["early_stopped"] is False
        assert len(log["history"]) == 2
        for rec in log["history"]:
            assert set(rec) == {"epoch", "train_loss", "val_iou"}
        assert log["best_val_iou"] == max(r["val_iou"] for r in log["history"])
        assert json.loads((out / "run.json").read_text()) == log

    def test_checkpoint_reloads_with_spec_meta(self, trained):
        out, spec, _log = trained
        model, canvas, meta = load_checkpoint(out / "checkpoint.pt")
        assert canvas == (64, 64)
        assert meta["spec"] == spec.to_json()
        assert not model.training

    def test_layer_spec_export_matches_arch(self, trained):
        out, _spec, _log = trained
        proc = subprocess.run(
            ["shapeprobe", "rf", str(out / "layer_spec.json")],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert proc.stdout.strip() == "140"

    def test_loss_decreases_from_first_epoch(self, trained):
        _out, _spec, log = trained
        hist = log["history"]
        assert hist[-1]["train_loss"] < hist[0]["train_loss"]

    def test_canvas_mismatch_aborts(self, mini_sets, tmp_path):
        cfg = tmp_path / "cfg32.json"
        cfg.write_text(json.dumps({"canvas": [32, 32],
                                   "size_range": [10.0, 16.0]}))
        cli("gen", "--config", cfg, "--seed", 41, "--n", 2,
            "--out", tmp_path / "val32", "--pool", "procedural:7:48")
        spec = TrainSpec(train_dir=str(mini_sets / "train"),
                         val_dir=str(tmp_path / "val32"),
                         arch="unet140", out_dir=str(tmp_path / "out"),
                         epochs=1)
        with pytest.raises(DataError, match="canvas"):
            train(spec)
        assert not (tmp_path / "out" / "checkpoint.pt").exists()

    def test_broken_train_set_aborts_before_checkpoint(self, mini_sets,
                                                       tmp_path):
        broken = tmp_path / "train"
        shutil.copytree(mini_sets / "train", broken)
        (broken / "images" / "00003.png").unlink()
        spec = TrainSpec(train_dir=str(broken),
                         val_dir=str(mini_sets / "val"),
                         arch="unet140", out_dir=str(tmp_path / "out"),
                         epochs=1)
        with pytest.raises(DataError):
            train(spec)
        assert not (tmp_path / "out" / "checkpoint.pt").exists()

    def test_augmentation_materializes_through_dataset_cli(self, mini_sets,
                                                           tmp_path):
        spec = TrainSpec(train_dir=str(mini_sets / "train"),
                         val_dir=str(mini_sets / "val"),
                         arch="unet140", out_dir=str(tmp_path), epochs=1,
                         augmentation={"kind": "color_jitter", "prob": 1.0,
                                       "seed": 9})
        log = train(spec)
        aug = tmp_path / "train_augmented"
        assert log["train_dir"] == str(aug)
        man = json.loads((aug / "manifest.json").read_text())
        assert man["kind"] == "augmented"
        assert man["augmentation"]["kind"] == "color_jitter"


class TestPredict:
    def test_same_checkpoint_twice_is_identical(self, trained, tmp_path):
        out, spec, _log = trained
        model, canvas, _ = load_checkpoint(out / "checkpoint.pt")
        a, b = tmp_path / "a", tmp_path / "b"
        assert predict_dataset(model, canvas, spec.val_dir, a) == 8
        assert predict_dataset(model, canvas, spec.val_dir, b) == 8
        assert dir_hashes(a) == dir_hashes(b)
        assert dir_hashes(a) == dir_hashes(out / "predictions" / "val")

    def test_prediction_files_follow_scene_indices(self, trained):
        out, _spec, _log = trained
        names = sorted(p.name for p in (out / "predictions" / "rm").iterdir())
        assert names == [f"{i:05d}.png" for i in range(8)]

    def test_predicts_without_ground_truth_masks(self, trained, tmp_path):
        """Deleting every mask must not affect inference."""
        out, spec, _log = trained
        stripped = tmp_path / "val_stripped"
        shutil.copytree(spec.val_dir, stripped)
        shutil.rmtree(stripped / "masks")
        model, canvas, _ = load_checkpoint(out / "checkpoint.pt")
        dest = tmp_path / "preds"
        assert predict_dataset(model, canvas, stripped, dest) == 8
        assert dir_hashes(dest) == dir_hashes(out / "predictions" / "val")

    def test_checkpoint_canvas_is_enforced(self, trained, tmp_path):
        out, _spec, _log = trained
        cfg = tmp_path / "cfg32.json"
        cfg.write_text(json.dumps({"canvas": [32, 32],
                                   "size_range": [10.0, 16.0]}))
        cli("gen", "--config", cfg, "--seed", 42, "--n", 2,
            "--out", tmp_path / "tiny", "--pool", "procedural:7:48")
        model, canvas, _ = load_checkpoint(out / "checkpoint.pt")
        with pytest.raises(DataError, match="canvas"):
            predict_dataset(model, canvas, tmp_path / "tiny", tmp_path / "p")


class TestCli:
    def test_train_command(self, mini_sets, tmp_path):
        spec = {"train_dir": str(mini_sets / "train"),
                "val_dir": str(mini_sets / "val"),
                "arch": "unet140", "out_dir": str(tmp_path / "run"),
                "epochs": 1, "predict": {"val": str(mini_sets / "val")}}
        path = tmp_path / "spec.json"
        path.write_text(json.dumps(spec))
        proc = harness_cli("train", path)
        assert proc.returncode == 0, proc.stderr
        assert "best val IOU" in proc.stdout
        assert "wrote 8 predictions for val" in proc.stdout

    def test_train_rejects_unknown_spec_keys(self, mini_sets, tmp_path):
        path = tmp_path / "spec.json"
        path.write_text(json.dumps({"train_dir": str(mini_sets / "train"),
                                    "val_dir": str(mini_sets / "val"),
                                    "arch": "unet140",
                                    "out_dir": str(tmp_path / "run"),
                                    "learning_rate": 0.1}))
        proc = harness_cli("train", path)
        assert proc.returncode == 2
        assert "learning_rate" in proc.stderr

    def test_train_missing_dataset_exits_3(self, tmp_path):
        path = tmp_path / "spec.json"
        path.write_text(json.dumps({"train_dir": str(tmp_path / "nowhere"),
                                    "val_dir": str(tmp_path / "nowhere"),
                                    "arch": "unet140",
                                    "out_dir": str(tmp_path / "run")}))
        proc = harness_cli("train", path)
        assert proc.returncode == 3

    def test_predict_command(self, trained, tmp_path):
        out, spec, _log = trained
        proc = harness_cli("predict", out / "checkpoint.pt", spec.val_dir,
                           "--out", tmp_path)
        assert proc.returncode == 0, proc.stderr
        written = tmp_path / Path(spec.val_dir).name
        assert len(list(written.iterdir())) == 8

    def test_predict_refuses_ground_truth_paths(self, trained, tmp_path):
        """A dataset routed through a masks/ directory trips the guard."""
        out, spec, _log = trained
        hidden = tmp_path / "masks" / "val"
        shutil.copytree(spec.val_dir, hidden)
        proc = harness_cli("predict", out / "checkpoint.pt", hidden,
                           "--out", tmp_path / "p")
        assert proc.returncode == 4
        assert "may not read" in proc.stderr

    def test_export_spec_round_trip(self, tmp_path):
        proc = harness_cli("export-spec", "unet210")
        assert proc.returncode == 0
        stages = json.loads(proc.stdout)["stages"]
        assert [s["dilation"] for s in stages[:2]] == [1, 1]
        out = tmp_path / "spec.json"
        assert harness_cli("export-spec", "unet140",
                           "--out", out).returncode == 0
        assert json.loads(out.read_text()) == json.loads(
            harness_cli("export-spec", "unet140").stdout)
