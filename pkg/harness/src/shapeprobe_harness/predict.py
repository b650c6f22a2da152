"""Checkpoint inference into the prediction exchange format.

Every filesystem read goes through ``data.guarded``; ground-truth masks are
unreachable from this module by construction. Scenes run through the network
one at a time so outputs do not depend on batch composition.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import torch

from .data import canvas_of, guarded, load_image, save_mask
from .errors import DataError
from .models import make_model

THRESHOLD = 0.5


def save_checkpoint(path: str | Path, model: torch.nn.Module,
                    canvas: tuple[int, int], meta: dict[str, Any]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({"arch": model.arch, "canvas": list(canvas),
                "state_dict": model.state_dict(), "meta": meta}, path)


def load_checkpoint(path: str | Path) -> tuple[torch.nn.Module,
                                               tuple[int, int],
                                               dict[str, Any]]:
    payload = torch.load(guarded(path), map_location="cpu", weights_only=True)
    model = make_model(payload["arch"])
    model.load_state_dict(payload["state_dict"])
    model.eval()
    w, h = payload["canvas"]
    return model, (int(w), int(h)), payload.get("meta", {})


def _read_manifest_guarded(root: Path) -> dict[str, Any]:
    path = guarded(root / "manifest.json")
    if not path.is_file():
        raise DataError(f"no manifest.json under {root}")
    with open(path) as fh:
        return json.load(fh)


@torch.no_grad()
def predict_dataset(model: torch.nn.Module, canvas: tuple[int, int],
                    dataset_dir: str | Path, out_dir: str | Path) -> int:
    """One thresholded mask PNG per scene; returns the scene count."""
    dataset_dir = Path(dataset_dir)
    out_dir = Path(out_dir)
    manifest = _read_manifest_guarded(dataset_dir)
    if canvas_of(manifest) != tuple(canvas):
        raise DataError(
            f"checkpoint canvas {canvas} but {dataset_dir} holds "
            f"{canvas_of(manifest)} scenes")
    model.eval()
    n = 0
    for rec in manifest["scenes"]:
        image = load_image(guarded(dataset_dir / rec["image"]))
        x = torch.from_numpy(
            image.astype(np.float32).transpose(2, 0, 1) / 255.0)[None]
        logits = model(x)[0, 0]
        save_mask(out_dir / f"{int(rec['index']):05d}.png",
                  torch.sigmoid(logits).numpy() > THRESHOLD)
        n += 1
    return n


def predict_sets(checkpoint: str | Path,
                 datasets: Mapping[str, str | Path] | Sequence[str | Path],
                 out_root: str | Path) -> dict[str, int]:
    """Predict several datasets into per-name subdirectories of out_root."""
    model, canvas, _meta = load_checkpoint(checkpoint)
    if not isinstance(datasets, Mapping):
        datasets = {Path(d).name: d for d in datasets}
    out_root = Path(out_root)
    counts = {}
    for name, ds in datasets.items():
        counts[name] = predict_dataset(model, canvas, ds, out_root / name)
    return counts
