"""End-to-end trend check: shape-only training yields a higher shape-bias
index than shape+texture training on otherwise identical 64x64 data.

This is the one expensive test in the suite: it trains two real networks
(~15 min each on CPU at the pinned recipe) and scores both through the
dataset package's evaluator. Every artifact crosses the package boundary as
files; nothing is imported from shapeprobe.

Recipe frozen after convergence pre-runs on this build: 240 train / 60 val
scenes, unet140, adam_default, 100 epochs, patience 10, seed 7. Observed at
freeze time: shape-only val IOU 0.9271, SBI 4.23 (early stop at 67 epochs);
shape+texture val IOU 0.9422, SBI 2.62. The asserted bounds keep the
criterion thresholds, not the observed values, so backend drift has room."""
import json
import time

from conftest import POOL, UNSEEN, cli, harness_cli

CONFIG = {"canvas": [64, 64], "size_range": [20.0, 32.0]}
N_TRAIN, N_VAL = 240, 60


def build_sets(root, tag, overrides):
    cfg = root / f"{tag}_cfg.json"
    cfg.write_text(json.dumps({**CONFIG, **overrides}))
    sets = {k: root / f"{tag}_{k}" for k in ("train", "val", "rm", "aff",
                                             "shuf")}
    cli("gen", "--config", cfg, "--seed", 201, "--n", N_TRAIN,
        "--out", sets["train"], "--pool", POOL)
    cli("gen", "--config", cfg, "--seed", 202, "--n", N_VAL,
        "--out", sets["val"], "--pool", POOL)
    cli("probe", sets["val"], "--kind", "rm", "--seed", 211,
        "--out", sets["rm"], "--unseen", UNSEEN)
    cli("probe", sets["val"], "--kind", "aff", "--seed", 212,
        "--out", sets["aff"])
    cli("probe", sets["val"], "--kind", "shuf", "--seed", 213,
        "--out", sets["shuf"])
    return sets


def train_and_score(root, tag, overrides):
    sets = build_sets(root, tag, overrides)
    out = root / f"{tag}_run"
    spec = root / f"{tag}_spec.json"
    spec.write_text(json.dumps({
        "train_dir": str(sets["train"]), "val_dir": str(sets["val"]),
        "arch": "unet140", "out_dir": str(out), "epochs": 100, "seed": 7,
        "predict": {k: str(sets[k]) for k in ("val", "rm", "aff", "shuf")},
    }))
    proc = harness_cli("train", spec)
    assert proc.returncode == 0, proc.stderr
    report = root / f"{tag}_report.json"
    args = ["eval"]
    for kind in ("val", "rm", "aff", "shuf"):
        args += [f"--{kind}", sets[kind], out / "predictions" / kind]
    cli(*args, "--out", report)
    return json.loads(report.read_text())


def test_shape_only_training_scores_higher_index(tmp_path_factory):
    start = time.monotonic()
    root = tmp_path_factory.mktemp("trend")
    shape = train_and_score(root, "shape", {})
    tex = train_and_score(root, "tex", {"texture_feature": True})

    assert shape["iou"]["val"] >= 0.9
    # The comparison only means something if the texture-cued twin also
    # learned its (easier) task.
    assert tex["iou"]["val"] >= 0.8
    assert shape["sbi"] > tex["sbi"]
    assert time.monotonic() - start < 10800.0
