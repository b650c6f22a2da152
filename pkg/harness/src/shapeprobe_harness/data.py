"""Dataset-directory access through the exchange format only.

A dataset is a directory holding manifest.json plus images/, masks/ and
instances/ subdirectories; scene records carry relative paths. Prediction
code must route every read through ``guarded`` so ground-truth masks stay
unreadable at inference time.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np
from PIL import Image

from .errors import DataError, GuardError


def guarded(path: str | Path) -> Path:
    """Refuse any path that points into a masks/ directory."""
    path = Path(path)
    if "masks" in path.parts:
        raise GuardError(f"prediction code may not read {path}")
    return path


def read_manifest(root: str | Path) -> dict[str, Any]:
    path = Path(root) / "manifest.json"
    if not path.is_file():
        raise DataError(f"no manifest.json under {root}")
    with open(path) as fh:
        manifest = json.load(fh)
    if "scenes" not in manifest or "canvas" not in manifest:
        raise DataError(f"{path} is not a dataset manifest")
    return manifest


def canvas_of(manifest: dict[str, Any]) -> tuple[int, int]:
    w, h = manifest["canvas"]
    return int(w), int(h)


def load_image(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def load_mask(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("L")) > 127


def save_mask(path: str | Path, mask: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8)).save(path)


def check_dataset(root: str | Path) -> dict[str, Any]:
    """Verify the manifest matches the directory before touching a model.

    Every listed scene file must exist and the first image must match the
    declared canvas.
    """
    root = Path(root)
    manifest = read_manifest(root)
    for rec in manifest["scenes"]:
        for key in ("image", "mask"):
            if not (root / rec[key]).is_file():
                raise DataError(f"manifest lists {rec[key]} but {root} lacks it")
    if manifest["scenes"]:
        first = load_image(root / manifest["scenes"][0]["image"])
        w, h = canvas_of(manifest)
        if first.shape[:2] != (h, w):
            raise DataError(
                f"canvas {w}x{h} in manifest but image is "
                f"{first.shape[1]}x{first.shape[0]}")
    return manifest


def load_training_arrays(root: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """All scenes as float32 CHW images in [0, 1] and float32 HxW masks."""
    root = Path(root)
    manifest = read_manifest(root)
    images, masks = [], []
    for rec in manifest["scenes"]:
        img = load_image(root / rec["image"]).astype(np.float32) / 255.0
        images.append(img.transpose(2, 0, 1))
        masks.append(load_mask(root / rec["mask"]).astype(np.float32))
    return np.stack(images), np.stack(masks)
