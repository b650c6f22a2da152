"""Training loop: BCE-with-logits, early stopping on validation IOU.

Determinism is best-effort: the run is fully seeded and reproducible on one
backend build, but bitwise equality across torch versions or devices is not
guaranteed. Validation masks are read here (training owns the labels); the
prediction path never sees them.
"""
from __future__ import annotations

import json
import subprocess
from pathlib import Path
from typing import Any

import numpy as np
import torch

from .data import canvas_of, check_dataset, load_training_arrays
from .errors import DataError, SpecError
from .models import make_model
from .predict import THRESHOLD, predict_dataset, save_checkpoint
from .spec import TrainSpec

_OPTIMIZERS = {
    "adam_default": lambda p: torch.optim.Adam(p, lr=1e-3),
    "sgd_sweep": lambda p: torch.optim.SGD(p, lr=1e-2, weight_decay=1e-5,
                                           momentum=0.9),
}


def _materialize_augmented(spec: TrainSpec, out_dir: Path) -> Path:
    """Build the augmented training copy through the dataset CLI so the
    transform semantics match the rest of the pipeline."""
    block = dict(spec.augmentation)
    kind = block.pop("kind")
    target = out_dir / "train_augmented"
    cmd = ["shapeprobe", "augment", spec.train_dir, "--kind", kind,
           "--out", str(target), "--seed", str(block.pop("seed", spec.seed))]
    if "prob" in block:
        cmd += ["--prob", str(block.pop("prob"))]
    if block:
        extra = out_dir / "augment_spec.json"
        extra.write_text(json.dumps(block))
        cmd += ["--spec", str(extra)]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise SpecError(f"augmentation failed: {proc.stderr.strip()}")
    return target


def _batch_iou(logits: torch.Tensor, masks: torch.Tensor) -> float:
    pred = torch.sigmoid(logits) > THRESHOLD
    gt = masks > 0.5
    inter = (pred & gt).sum(dim=(1, 2))
    union = (pred | gt).sum(dim=(1, 2))
    per_image = torch.where(union > 0, inter / union.clamp(min=1),
                            torch.ones_like(union, dtype=torch.float64))
    return float(per_image.double().mean())


@torch.no_grad()
def _validation_iou(model: torch.nn.Module, images: torch.Tensor,
                    masks: torch.Tensor) -> float:
    model.eval()
    scores = []
    for i in range(images.shape[0]):
        logits = model(images[i:i + 1])[:, 0]
        scores.append(_batch_iou(logits, masks[i:i + 1]))
    model.train()
    return float(np.mean(scores))


def train(spec: TrainSpec) -> dict[str, Any]:
    """Run the spec end to end; returns (and writes) the run log."""
    out_dir = Path(spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_manifest = check_dataset(spec.train_dir)
    val_manifest = check_dataset(spec.val_dir)
    if canvas_of(train_manifest) != canvas_of(val_manifest):
        raise DataError("train and val sets disagree on canvas size")

    train_dir = spec.train_dir
    if spec.augmentation is not None:
        train_dir = _materialize_augmented(spec, out_dir)
        check_dataset(train_dir)

    torch.manual_seed(spec.seed)
    model = make_model(spec.arch)
    model.train()
    optimizer = _OPTIMIZERS[spec.optimizer](model.parameters())
    loss_fn = torch.nn.BCEWithLogitsLoss()

    images, masks = load_training_arrays(train_dir)
    val_images, val_masks = load_training_arrays(spec.val_dir)
    images = torch.from_numpy(images)
    masks = torch.from_numpy(masks)
    val_images = torch.from_numpy(val_images)
    val_masks = torch.from_numpy(val_masks)

    rng = np.random.default_rng(spec.seed)
    history: list[dict[str, float]] = []
    best_iou = -1.0
    best_epoch = -1
    best_state = None
    for epoch in range(spec.epochs):
        order = rng.permutation(images.shape[0])
        losses = []
        for start in range(0, len(order), spec.batch_size):
            idx = order[start:start + spec.batch_size]
            logits = model(images[idx])[:, 0]
            loss = loss_fn(logits, masks[idx])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
        val_iou = _validation_iou(model, val_images, val_masks)
        history.append({"epoch": epoch, "train_loss": float(np.mean(losses)),
                        "val_iou": val_iou})
        if val_iou > best_iou:
            best_iou = val_iou
            best_epoch = epoch
            best_state = {k: v.detach().clone()
                          for k, v in model.state_dict().items()}
        elif epoch - best_epoch >= spec.patience:
            break
    if best_state is not None:
        model.load_state_dict(best_state)

    canvas = canvas_of(train_manifest)
    save_checkpoint(out_dir / "checkpoint.pt", model, canvas,
                    {"spec": spec.to_json()})
    spec_json = model.layer_spec()
    (out_dir / "layer_spec.json").write_text(json.dumps(spec_json, indent=2))

    predictions = {}
    for name, ds in spec.predict.items():
        predictions[name] = predict_dataset(
            model, canvas, ds, out_dir / "predictions" / name)

    log = {
        "arch": spec.arch,
        "optimizer": spec.optimizer,
        "seed": spec.seed,
        "epochs_requested": spec.epochs,
        "epochs_run": len(history),
        "early_stopped": 0 < len(history) < spec.epochs,
        "best_epoch": best_epoch if history else None,
        "best_val_iou": best_iou if history else None,
        "train_dir": str(train_dir),
        "val_dir": spec.val_dir,
        "history": history,
        "predictions": predictions,
    }
    (out_dir / "run.json").write_text(json.dumps(log, indent=2))
    return log
