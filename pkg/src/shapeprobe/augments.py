"""Training-time augmentations.

Two of the five kinds alter mask geometry (random_resized_crop,
random_crop_reflect); the rest are label-preserving. negative_insertion
pastes shuffled target patches elsewhere in the image without labeling them,
suppressing singularity cues.
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

AUGMENT_KINDS = ("color_jitter", "separate_color_jitter", "negative_insertion",
                 "random_resized_crop", "random_crop_reflect")
SHAPE_ALTERING = frozenset({"random_resized_crop", "random_crop_reflect"})

_PASTE_TRIES = 32


@dataclass(frozen=True)
class AugmentationSpec:
    kind: str
    prob: float = 1.0
    brightness: float = 0.4
    contrast: float = 0.4
    saturation: float = 0.2
    crop_scale: tuple[float, float] = (0.3, 1.0)
    crop_ratio: tuple[float, float] = (0.75, 4.0 / 3.0)

    def __post_init__(self):
        if self.kind not in AUGMENT_KINDS:
            raise ValidationError(
                f"unknown augmentation {self.kind!r}; choose from {AUGMENT_KINDS}")
        if not 0.0 <= self.prob <= 1.0:
            raise ValidationError("prob must lie in [0, 1]")
        for name in ("brightness", "contrast", "saturation"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValidationError(f"{name} range {v} outside [0, 1)")

    @property
    def shape_altering(self) -> bool:
        return self.kind in SHAPE_ALTERING

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "AugmentationSpec":
        kwargs = dict(obj)
        for key in ("crop_scale", "crop_ratio"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        try:
            return cls(**kwargs)
        except TypeError as e:
            raise ValidationError(f"malformed augmentation spec: {e}") from e


@dataclass
class AugmentResult:
    image: np.ndarray
    mask: np.ndarray
    applied: bool
    note: str = ""


def _jitter_params(spec: AugmentationSpec, rng: np.random.Generator
                   ) -> tuple[float, float, float]:
    b = rng.uniform(1.0 - spec.brightness, 1.0 + spec.brightness)
    c = rng.uniform(1.0 - spec.contrast, 1.0 + spec.contrast)
    s = rng.uniform(1.0 - spec.saturation, 1.0 + spec.saturation)
    return float(b), float(c), float(s)


def color_map(image: np.ndarray, brightness: float, contrast: float,
              saturation: float, region: np.ndarray | None = None) -> np.ndarray:
    """Brightness, contrast (about the region's gray mean), then saturation.

    Unit parameters reproduce the input exactly.
    """
    out = image.astype(np.float64)
    sel = np.ones(image.shape[:2], dtype=bool) if region is None else region
    if not sel.any():
        return image.copy()
    px = out[sel]
    px = px * brightness
    gray_mean = px.mean()
    px = (px - gray_mean) * contrast + gray_mean
    gray = px.mean(axis=1, keepdims=True)
    px = gray + (px - gray) * saturation
    out[sel] = px
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _negative_insertion(image: np.ndarray, target_mask: np.ndarray,
                        instance_masks: list[np.ndarray],
                        rng: np.random.Generator) -> tuple[np.ndarray, bool]:
    """Paste 2x2-shuffled copies of the target's pixels into free space."""
    ys, xs = np.nonzero(target_mask)
    if ys.size == 0:
        return image, False
    y0, y1 = int(ys.min()), int(ys.max()) + 1
    x0, x1 = int(xs.min()), int(xs.max()) + 1
    bh, bw = y1 - y0, x1 - x0
    h, w = target_mask.shape
    if bh < 2 or bw < 2 or bh >= h or bw >= w:
        return image, False

    occupied = np.zeros_like(target_mask)
    for m in instance_masks:
        occupied |= m

    hh, hw = bh // 2, bw // 2
    quads = [(0, 0), (0, 1), (1, 0), (1, 1)]
    while True:
        order = rng.permutation(4)
        if not np.array_equal(order, np.arange(4)):
            break

    for _ in range(_PASTE_TRIES):
        py = int(rng.integers(0, h - bh))
        px = int(rng.integers(0, w - bw))
        if occupied[py:py + bh, px:px + bw].any():
            continue
        out = image.copy()
        for slot, src_i in enumerate(order):
            sr, sc = quads[src_i]
            dr, dc = quads[slot]
            sy, sx = y0 + sr * hh, x0 + sc * hw
            dy, dx = py + dr * hh, px + dc * hw
            qh = bh - hh if sr else hh
            qw = bw - hw if sc else hw
            qh = min(qh, bh - dr * hh)
            qw = min(qw, bw - dc * hw)
            sub_mask = target_mask[sy:sy + qh, sx:sx + qw]
            dst = out[dy:dy + qh, dx:dx + qw]
            dst[sub_mask] = image[sy:sy + qh, sx:sx + qw][sub_mask]
        return out, True
    return image, False


def augment(image: np.ndarray, target_mask: np.ndarray,
            instance_masks: list[np.ndarray], spec: AugmentationSpec,
            rng: np.random.Generator) -> AugmentResult:
    """Apply one augmentation with probability spec.prob.

    Label-preserving kinds return the mask unchanged; shape-altering kinds
    transform it identically to the image.
    """
    if rng.random() >= spec.prob:
        return AugmentResult(image.copy(), target_mask.copy(), False, "skipped by prob")

    h, w = target_mask.shape
    if spec.kind == "color_jitter":
        b, c, s = _jitter_params(spec, rng)
        return AugmentResult(color_map(image, b, c, s), target_mask.copy(), True)

    if spec.kind == "separate_color_jitter":
        fg = np.asarray(target_mask, dtype=bool)
        b1, c1, s1 = _jitter_params(spec, rng)
        b2, c2, s2 = _jitter_params(spec, rng)
        out = color_map(image, b1, c1, s1, region=fg)
        out = color_map(out, b2, c2, s2, region=~fg)
        return AugmentResult(out, target_mask.copy(), True)

    if spec.kind == "negative_insertion":
        out, ok = _negative_insertion(image, target_mask, instance_masks, rng)
        note = "" if ok else "no paste location; skipped"
        return AugmentResult(out.copy(), target_mask.copy(), ok, note)

    if spec.kind == "random_resized_crop":
        area = h * w * rng.uniform(*spec.crop_scale)
        ratio = np.exp(rng.uniform(np.log(spec.crop_ratio[0]),
                                   np.log(spec.crop_ratio[1])))
        cw = int(np.clip(np.sqrt(area * ratio), 8, w))
        ch = int(np.clip(np.sqrt(area / ratio), 8, h))
        cy = int(rng.integers(0, h - ch + 1))
        cx = int(rng.integers(0, w - cw + 1))
        img_c = image[cy:cy + ch, cx:cx + cw]
        mask_c = target_mask[cy:cy + ch, cx:cx + cw]
        out_img = cv2.resize(img_c, (w, h), interpolation=cv2.INTER_LINEAR)
        out_mask = cv2.resize(mask_c.astype(np.uint8), (w, h),
                              interpolation=cv2.INTER_NEAREST).astype(bool)
        return AugmentResult(out_img, out_mask, True)

    if spec.kind == "random_crop_reflect":
        ch = int(rng.uniform(0.5, 1.0) * h)
        cw = int(rng.uniform(0.5, 1.0) * w)
        ch, cw = max(ch, 8), max(cw, 8)
        cy = int(rng.integers(0, h - ch + 1))
        cx = int(rng.integers(0, w - cw + 1))
        top = (h - ch) // 2
        left = (w - cw) // 2
        pads2 = ((top, h - ch - top), (left, w - cw - left))
        img_c = image[cy:cy + ch, cx:cx + cw]
        mask_c = target_mask[cy:cy + ch, cx:cx + cw]
        out_img = np.pad(img_c, (*pads2, (0, 0)), mode="reflect")
        out_mask = np.pad(mask_c, pads2, mode="reflect")
        return AugmentResult(out_img, out_mask, True)

    raise ValidationError(f"unhandled augmentation {spec.kind!r}")


def augment_dataset(val_dir: str | Path, out_dir: str | Path,
                    spec: AugmentationSpec, seed: int = 0,
                    force: bool = False) -> dict[str, Any]:
    """Augmented copy of a dataset; records which scenes were transformed."""
    val_dir = Path(val_dir)
    manifest = io.read_manifest(val_dir)
    out_dir = io.require_empty_or_force(out_dir, force)
    io.ensure_dataset_dirs(out_dir)
    scene_meta = []
    for index in io.scene_indices(manifest):
        rng = child_rng(seed, DOMAIN_AUGMENT, index)
        paths = io.scene_paths(val_dir, index)
        image = io.load_image(paths["image"])
        mask = io.load_mask(paths["mask"])
        meta = io.read_instances(val_dir, index)
        inst_masks = []
        for inst in meta["instances"]:
            m = io.rle_decode(inst["parts"][0]["rle"])
            for p in inst["parts"][1:]:
                m |= io.rle_decode(p["rle"])
            inst_masks.append(m)
        result = augment(image, mask, inst_masks, spec, rng)
        out_paths = io.scene_paths(out_dir, index)
        io.save_image(out_paths["image"], result.image)
        io.save_mask(out_paths["mask"], result.mask)
        io.write_json(out_paths["instances"], meta)
        scene_meta.append({"index": index, "applied": result.applied,
                           "note": result.note})
    out_manifest = dict(manifest)
    out_manifest["kind"] = "augmented"
    out_manifest["augmentation"] = {"kind": spec.kind, "prob": spec.prob,
                                    "seed": int(seed)}
    io.write_manifest(out_dir, out_manifest)
    meta = {
        "format_version": io.FORMAT_VERSION,
        "kind": "augmentation",
        "augmentation": spec.kind,
        "shape_altering": spec.shape_altering,
        "seed": int(seed),
        "source_manifest_hash": io.manifest_hash(val_dir),
        "scenes": scene_meta,
    }
    io.write_probe_meta(out_dir, meta)
    return meta
