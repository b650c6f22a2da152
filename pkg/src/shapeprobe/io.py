"""File formats and dataset directory layout.

A dataset directory holds images/NNNNN.png (8-bit RGB), masks/NNNNN.png
(8-bit gray, 0 background / 255 target), instances/NNNNN.json (per-object
part masks as run-length encodings plus texture assignments) and
manifest.json. Probe sets add probe.json. All JSON on disk is canonical
(sorted keys, compact separators, UTF-8) so a file's bytes hash the same
regardless of which process wrote it.
"""
from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Iterator

import numpy as np
from PIL import Image

from .errors import StorageError, ValidationError

FORMAT_VERSION = 1

IMAGE_DIR = "images"
MASK_DIR = "masks"
INSTANCE_DIR = "instances"
MANIFEST_NAME = "manifest.json"
PROBE_NAME = "probe.json"


# --------------------------------------------------------------------------
# run-length encoding of binary masks

def rle_encode(mask: np.ndarray) -> dict[str, Any]:
    """Row-major RLE; counts alternate 0-runs/1-runs starting with zeros."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValidationError(f"mask must be 2-D, got shape {mask.shape}")
    flat = mask.reshape(-1).astype(bool)
    if flat.size == 0:
        raise ValidationError("cannot encode an empty mask")
    change = np.nonzero(np.diff(flat))[0] + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    counts = np.diff(bounds).tolist()
    if flat[0]:
        counts = [0] + counts
    return {"size": [int(mask.shape[0]), int(mask.shape[1])], "counts": counts}


def rle_decode(rle: dict[str, Any]) -> np.ndarray:
    try:
        h, w = (int(v) for v in rle["size"])
        counts = rle["counts"]
    except (KeyError, TypeError, ValueError) as e:
        raise ValidationError(f"malformed RLE object: {e}") from e
    total = sum(counts)
    if total != h * w:
        raise ValidationError(f"RLE counts sum {total} != {h}*{w}")
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for run in counts:
        if run < 0:
            raise ValidationError("negative RLE run")
        if value:
            flat[pos:pos + run] = True
        pos += run
        value = not value
    return flat.reshape(h, w)


# --------------------------------------------------------------------------
# canonical JSON and hashing

def canonical_json_bytes(obj: Any) -> bytes:
    try:
        return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                          ensure_ascii=False, allow_nan=False).encode("utf-8")
    except (TypeError, ValueError) as e:
        raise ValidationError(f"object is not canonical-JSON serializable: {e}") from e


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def hash_obj(obj: Any) -> str:
    return sha256_hex(canonical_json_bytes(obj))


def write_json(path: str | Path, obj: Any) -> None:
    path = Path(path)
    try:
        path.write_bytes(canonical_json_bytes(obj))
    except OSError as e:
        raise StorageError(f"cannot write {path}: {e}") from e


def read_json(path: str | Path) -> Any:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise StorageError(f"cannot read {path}: {e}") from e
    try:
        return json.loads(raw)
    except json.JSONDecodeError as e:
        raise StorageError(f"invalid JSON in {path}: {e}") from e


def hash_file(path: str | Path) -> str:
    path = Path(path)
    try:
        return sha256_hex(path.read_bytes())
    except OSError as e:
        raise StorageError(f"cannot read {path}: {e}") from e


def hash_tree(root: str | Path) -> str:
    """Digest over (relative path, content digest) pairs, path-sorted."""
    root = Path(root)
    if not root.is_dir():
        raise StorageError(f"not a directory: {root}")
    acc = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        rel = path.relative_to(root).as_posix()
        acc.update(rel.encode("utf-8"))
        acc.update(b"\0")
        acc.update(bytes.fromhex(hash_file(path)))
    return acc.hexdigest()


# --------------------------------------------------------------------------
# image and mask PNG I/O

def save_image(path: str | Path, image: np.ndarray) -> None:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ValidationError(f"image must be uint8 HxWx3, got {image.dtype} {image.shape}")
    try:
        Image.fromarray(image, mode="RGB").save(path, format="PNG")
    except OSError as e:
        raise StorageError(f"cannot write {path}: {e}") from e


def load_image(path: str | Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except OSError as e:
        raise StorageError(f"cannot read image {path}: {e}") from e


def save_mask(path: str | Path, mask: np.ndarray) -> None:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValidationError(f"mask must be 2-D, got shape {mask.shape}")
    arr = np.where(mask.astype(bool), 255, 0).astype(np.uint8)
    try:
        Image.fromarray(arr, mode="L").save(path, format="PNG")
    except OSError as e:
        raise StorageError(f"cannot write {path}: {e}") from e


def load_mask(path: str | Path) -> np.ndarray:
    """Gray PNG to bool; values >= 128 count as target (prediction convention)."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("L"), dtype=np.uint8)
    except OSError as e:
        raise StorageError(f"cannot read mask {path}: {e}") from e
    return arr >= 128


# --------------------------------------------------------------------------
# dataset directories

def scene_name(index: int) -> str:
    if not 0 <= index <= 99999:
        raise ValidationError(f"scene index {index} outside [0, 99999]")
    return f"{index:05d}"


def ensure_dataset_dirs(root: str | Path) -> Path:
    root = Path(root)
    try:
        for sub in (IMAGE_DIR, MASK_DIR, INSTANCE_DIR):
            (root / sub).mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise StorageError(f"cannot create dataset directory under {root}: {e}") from e
    return root


def scene_paths(root: str | Path, index: int) -> dict[str, Path]:
    root = Path(root)
    name = scene_name(index)
    return {
        "image": root / IMAGE_DIR / f"{name}.png",
        "mask": root / MASK_DIR / f"{name}.png",
        "instances": root / INSTANCE_DIR / f"{name}.json",
    }


def write_scene(root: str | Path, index: int, image: np.ndarray,
                mask: np.ndarray, instances: dict[str, Any]) -> None:
    paths = scene_paths(root, index)
    save_image(paths["image"], image)
    save_mask(paths["mask"], mask)
    write_json(paths["instances"], instances)


def read_instances(root: str | Path, index: int) -> dict[str, Any]:
    return read_json(scene_paths(root, index)["instances"])


def write_manifest(root: str | Path, manifest: dict[str, Any]) -> None:
    write_json(Path(root) / MANIFEST_NAME, manifest)


def read_manifest(root: str | Path) -> dict[str, Any]:
    path = Path(root) / MANIFEST_NAME
    if not path.is_file():
        raise StorageError(f"no {MANIFEST_NAME} in {root}")
    manifest = read_json(path)
    if not isinstance(manifest, dict) or "scenes" not in manifest:
        raise ValidationError(f"{path} is not a dataset manifest")
    return manifest


def manifest_hash(root: str | Path) -> str:
    """Hash of the manifest file bytes; files are canonical JSON, so this
    equals hash_obj(manifest)."""
    path = Path(root) / MANIFEST_NAME
    if not path.is_file():
        raise StorageError(f"no {MANIFEST_NAME} in {root}")
    return hash_file(path)


def write_probe_meta(root: str | Path, meta: dict[str, Any]) -> None:
    write_json(Path(root) / PROBE_NAME, meta)


def read_probe_meta(root: str | Path) -> dict[str, Any]:
    path = Path(root) / PROBE_NAME
    if not path.is_file():
        raise StorageError(f"no {PROBE_NAME} in {root}")
    return read_json(path)


def scene_indices(manifest: dict[str, Any]) -> list[int]:
    return [int(s["index"]) for s in manifest["scenes"]]


def iter_scenes(root: str | Path, manifest: dict[str, Any] | None = None
                ) -> Iterator[tuple[int, np.ndarray, np.ndarray]]:
    """Yield (index, image, mask) in manifest order."""
    root = Path(root)
    if manifest is None:
        manifest = read_manifest(root)
    for index in scene_indices(manifest):
        paths = scene_paths(root, index)
        yield index, load_image(paths["image"]), load_mask(paths["mask"])


def require_empty_or_force(out: str | Path, force: bool) -> Path:
    out = Path(out)
    if out.exists() and any(out.iterdir()) and not force:
        raise StorageError(f"output directory {out} is not empty (use force to overwrite)")
    return out


def prediction_path(pred_dir: str | Path, index: int) -> Path:
    return Path(pred_dir) / f"{scene_name(index)}.png"


def list_prediction_indices(pred_dir: str | Path) -> list[int]:
    pred_dir = Path(pred_dir)
    if not pred_dir.is_dir():
        raise StorageError(f"prediction directory {pred_dir} does not exist")
    out = []
    for p in sorted(pred_dir.glob("*.png")):
        stem = p.stem
        if stem.isdigit():
            out.append(int(stem))
    return out


def relpath_str(path: str | Path, root: str | Path) -> str:
    return os.path.relpath(str(path), str(root)).replace(os.sep, "/")
