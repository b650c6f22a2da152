"""Image corruptions at five severities, following common corruption-benchmark
parameter conventions. Corruptions touch images only; masks always pass
through untouched.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any

import cv2
import numpy as np

from . import io
from .errors import ValidationError
from .rng import DOMAIN_AUGMENT, child_rng

CORRUPTION_KINDS = ("gaussian", "shot", "impulse", "defocus", "pixelate", "motion")

# Severity 1..5 parameter tables.
_GAUSSIAN_SIGMA = (8.0, 12.0, 18.0, 26.0, 38.0)
_SHOT_PHOTONS = (60.0, 25.0, 12.0, 5.0, 3.0)       # photons per intensity unit
_IMPULSE_P = (0.03, 0.06, 0.09, 0.17, 0.27)
_DEFOCUS_RADIUS = (2, 3, 4, 6, 8)
_PIXELATE_BLOCK = (2, 3, 4, 6, 8)
_MOTION_LENGTH = (5, 7, 9, 13, 17)


@dataclass(frozen=True)
class CorruptionSpec:
    kind: str
    severity: int
    angle_deg: float | None = None  # motion only; None samples per image

    def __post_init__(self):
        if self.kind not in CORRUPTION_KINDS:
            raise ValidationError(
                f"unknown corruption {self.kind!r}; choose from {CORRUPTION_KINDS}")
        if not 1 <= self.severity <= 5:
            raise ValidationError(f"severity {self.severity} outside [1, 5]")


def _disk_kernel(radius: int) -> np.ndarray:
    size = 2 * radius + 1
    yy, xx = np.mgrid[0:size, 0:size] - radius
    k = ((xx ** 2 + yy ** 2) <= radius ** 2).astype(np.float64)
    return k / k.sum()


def _line_kernel(length: int, angle_deg: float) -> np.ndarray:
    k = np.zeros((length, length), dtype=np.float64)
    k[length // 2, :] = 1.0
    rot = cv2.getRotationMatrix2D((length / 2 - 0.5, length / 2 - 0.5),
                                  angle_deg, 1.0)
    k = cv2.warpAffine(k, rot, (length, length))
    total = k.sum()
    if total <= 0:
        k = np.zeros((length, length))
        k[length // 2, :] = 1.0
        total = k.sum()
    return k / total


def corrupt(image: np.ndarray, spec: CorruptionSpec,
            rng: np.random.Generator | None = None) -> np.ndarray:
    """Return a corrupted copy of the image; noise kinds require rng."""
    image = np.asarray(image)
    if image.dtype != np.uint8 or image.ndim != 3:
        raise ValidationError("corrupt expects a uint8 HxWx3 image")
    s = spec.severity - 1

    if spec.kind == "gaussian":
        if rng is None:
            raise ValidationError("gaussian corruption needs an rng")
        out = image.astype(np.float64) + rng.normal(0.0, _GAUSSIAN_SIGMA[s],
                                                    size=image.shape)
        return np.clip(np.rint(out), 0, 255).astype(np.uint8)

    if spec.kind == "shot":
        if rng is None:
            raise ValidationError("shot corruption needs an rng")
        lam = image.astype(np.float64) * _SHOT_PHOTONS[s] / 255.0
        counts = rng.poisson(lam)
        out = counts.astype(np.float64) * 255.0 / _SHOT_PHOTONS[s]
        return np.clip(np.rint(out), 0, 255).astype(np.uint8)

    if spec.kind == "impulse":
        if rng is None:
            raise ValidationError("impulse corruption needs an rng")
        out = image.copy()
        hit = rng.random(image.shape[:2]) < _IMPULSE_P[s]
        level = rng.integers(0, 2, size=image.shape[:2]).astype(np.uint8) * 255
        out[hit] = level[hit][:, None]
        return out

    if spec.kind == "defocus":
        k = _disk_kernel(_DEFOCUS_RADIUS[s])
        out = cv2.filter2D(image, -1, k, borderType=cv2.BORDER_REFLECT)
        return out.astype(np.uint8)

    if spec.kind == "pixelate":
        block = _PIXELATE_BLOCK[s]
        if block == 1:
            return image.copy()
        h, w = image.shape[:2]
        small = cv2.resize(image, (max(1, w // block), max(1, h // block)),
                           interpolation=cv2.INTER_AREA)
        return cv2.resize(small, (w, h), interpolation=cv2.INTER_NEAREST)

    if spec.kind == "motion":
        angle = spec.angle_deg
        if angle is None:
            if rng is None:
                raise ValidationError("motion corruption needs an rng or a fixed angle")
            angle = float(rng.uniform(0.0, 180.0))
        k = _line_kernel(_MOTION_LENGTH[s], angle)
        out = cv2.filter2D(image, -1, k, borderType=cv2.BORDER_REFLECT)
        return out.astype(np.uint8)

    raise ValidationError(f"unhandled corruption {spec.kind!r}")


def corrupt_dataset(val_dir: str | Path, out_dir: str | Path, spec: CorruptionSpec,
                    seed: int = 0, force: bool = False) -> dict[str, Any]:
    """Corrupted copy of a dataset: images corrupted, masks and instance
    metadata copied byte-for-byte."""
    import shutil

    val_dir = Path(val_dir)
    manifest = io.read_manifest(val_dir)
    out_dir = io.require_empty_or_force(out_dir, force)
    io.ensure_dataset_dirs(out_dir)
    for index in io.scene_indices(manifest):
        rng = child_rng(seed, DOMAIN_AUGMENT, index)
        paths = io.scene_paths(val_dir, index)
        out_paths = io.scene_paths(out_dir, index)
        io.save_image(out_paths["image"], corrupt(io.load_image(paths["image"]),
                                                  spec, rng))
        shutil.copyfile(paths["mask"], out_paths["mask"])
        shutil.copyfile(paths["instances"], out_paths["instances"])
    out_manifest = dict(manifest)
    out_manifest["kind"] = "corrupted"
    out_manifest["corruption"] = {"kind": spec.kind, "severity": spec.severity,
                                  "seed": int(seed)}
    io.write_manifest(out_dir, out_manifest)
    meta = {
        "format_version": io.FORMAT_VERSION,
        "kind": "corruption",
        "corruption": spec.kind,
        "severity": int(spec.severity),
        "seed": int(seed),
        "source_manifest_hash": io.manifest_hash(val_dir),
        "scenes": [{"index": i} for i in io.scene_indices(manifest)],
    }
    io.write_probe_meta(out_dir, meta)
    return meta
