"""Probe-set derivation from a validation dataset.

Three sets feed the bias index: retexture (rm), axis-aligned isometries
(aff) and 4x4 patch shuffle (shuf). Brightness grids and elastic series
support perturbation studies. Every probe directory mirrors the dataset
layout and adds probe.json with enough metadata to invert the transform.
"""
from __future__ import annotations

import shutil
from pathlib import Path
from typing import Any

import numpy as np
from scipy import ndimage

from . import io
from .errors import ProbeError
from .generate import FeatureConfig, _sample_sub_layout, _render_object, target_shape
from .geometry import (aligned_iou, displacement_field, elastic_unit, rasterize,
                       fit_polygon_to_box, sample_polygon, warp_mask)
from .rng import DOMAIN_ELASTIC, DOMAIN_PROBE, child_rng
from .textures import TexturePool, apply_texture, sample_phase

AFF_TAGS = ("rot90", "rot180", "rot270", "flip_h", "flip_v")
SHUF_GRID = 4
BRIGHTNESS_GAINS = tuple(np.linspace(0.2, 2.0, 10).round(2).tolist())
ELASTIC_DEGREES = tuple(range(1, 11))

_ADD_TRIES = 64
_ELASTIC_RETRIES = 8
_SELF_MAP_IOU = 0.99
_MAX_COMPONENTS = 3


# --------------------------------------------------------------------------
# shared plumbing

def _probe_manifest(val_manifest: dict[str, Any], kind: str, seed: int) -> dict[str, Any]:
    out = dict(val_manifest)
    out["kind"] = "probe"
    out["probe_kind"] = kind
    out["probe_seed"] = int(seed)
    return out


def _scene_records(root: Path, manifest: dict[str, Any]):
    for index in io.scene_indices(manifest):
        paths = io.scene_paths(root, index)
        yield index, paths


def _copy_scene_masks(src: Path, dst: Path, index: int) -> None:
    shutil.copyfile(io.scene_paths(src, index)["mask"],
                    io.scene_paths(dst, index)["mask"])


def _strip_phases(instances: dict[str, Any]) -> dict[str, Any]:
    """Geometry transforms invalidate recorded tiling phases."""
    out = dict(instances)
    out["background"] = dict(instances["background"], phase=None)
    out["instances"] = [
        dict(inst, parts=[dict(p, phase=None) for p in inst["parts"]])
        for inst in instances["instances"]
    ]
    return out


def _map_instance_masks(instances: dict[str, Any], fn) -> dict[str, Any]:
    out = dict(instances)
    out["instances"] = [
        dict(inst, parts=[
            dict(p, rle=io.rle_encode(fn(io.rle_decode(p["rle"]))))
            for p in inst["parts"]
        ])
        for inst in instances["instances"]
    ]
    return out


# --------------------------------------------------------------------------
# rm: retexture everything from an unseen pool

def make_rm(val_dir: str | Path, out_dir: str | Path, unseen: TexturePool,
            seed: int = 0, force: bool = False) -> dict[str, Any]:
    """Retexture all objects and the background from an unseen pool.

    Target masks are copied unchanged. When the source config is singular or
    semi-singular, an unlabeled random-shape distractor (complex when the
    config uses complex objects) is inserted so singularity cues cannot
    survive either.
    """
    val_dir = Path(val_dir)
    manifest = io.read_manifest(val_dir)
    cfg = FeatureConfig.from_json(manifest["config"])
    if manifest["seen_pool"] == unseen.origin:
        raise ProbeError(f"unseen pool {unseen.origin!r} equals the seen pool")
    out_dir = io.require_empty_or_force(out_dir, force)
    io.ensure_dataset_dirs(out_dir)

    add_distractor = cfg.singular or cfg.semi_singular
    shape_ref = None
    if add_distractor:
        ref_poly = target_shape(cfg)
        shape_ref = rasterize(fit_polygon_to_box(ref_poly, 51.2, (6.4, 6.4)), 64, 64)

    scene_meta = []
    for index, paths in _scene_records(val_dir, manifest):
        rng = child_rng(seed, DOMAIN_PROBE, index)
        instances = io.read_instances(val_dir, index)
        h, w = cfg.canvas[1], cfg.canvas[0]

        bg_id = unseen.ids[int(rng.integers(0, len(unseen)))]
        bg_tex = unseen.get(bg_id)
        bg_phase = sample_phase(bg_tex, rng)
        image = np.empty((h, w, 3), dtype=np.uint8)
        apply_texture(image, np.ones((h, w), dtype=bool), bg_tex, bg_phase)

        new_instances = []
        occupied = np.zeros((h, w), dtype=bool)
        for inst in instances["instances"]:
            masks = [io.rle_decode(p["rle"]) for p in inst["parts"]]
            ids = _draw_distinct(rng, unseen, len(masks), exclude={bg_id})
            parts = []
            for m, tid in zip(masks, ids):
                phase = sample_phase(unseen.get(tid), rng)
                apply_texture(image, m, unseen.get(tid), phase)
                occupied |= m
                parts.append({"rle": io.rle_encode(m), "texture_id": tid,
                              "phase": list(phase)})
            new_instances.append({"is_target": inst["is_target"], "parts": parts})

        if add_distractor:
            extra = _insert_distractor(image, occupied, cfg, unseen, bg_id,
                                       shape_ref, rng, index)
            new_instances.append(extra)

        out_paths = io.scene_paths(out_dir, index)
        io.save_image(out_paths["image"], image)
        _copy_scene_masks(val_dir, out_dir, index)
        io.write_json(out_paths["instances"], {
            **{k: instances[k] for k in ("format_version", "scene_index", "seed", "canvas")},
            "background": {"texture_id": bg_id, "phase": list(bg_phase)},
            "instances": new_instances,
        })
        scene_meta.append({"index": index, "added_distractor": bool(add_distractor)})

    io.write_manifest(out_dir, _probe_manifest(manifest, "rm", seed))
    probe = {
        "format_version": io.FORMAT_VERSION,
        "kind": "rm",
        "seed": int(seed),
        "source_manifest_hash": io.manifest_hash(val_dir),
        "params": {"unseen_pool": unseen.origin},
        "scenes": scene_meta,
    }
    io.write_probe_meta(out_dir, probe)
    return probe


def _draw_distinct(rng: np.random.Generator, pool: TexturePool, k: int,
                   exclude: set[str]) -> list[str]:
    avail = [i for i in pool.ids if i not in exclude] or pool.ids
    if k <= len(avail):
        picks = rng.choice(len(avail), size=k, replace=False)
    else:
        picks = rng.integers(0, len(avail), size=k)
    return [avail[int(i)] for i in picks]


def _insert_distractor(image: np.ndarray, occupied: np.ndarray, cfg: FeatureConfig,
                       unseen: TexturePool, bg_id: str, shape_ref: np.ndarray,
                       rng: np.random.Generator, index: int) -> dict[str, Any]:
    """Paint an unlabeled object into free space; returns its instance record."""
    h, w = occupied.shape
    lo, hi = cfg.size_range
    for _ in range(_ADD_TRIES):
        shape = sample_polygon(rng)
        if aligned_iou(shape_ref,
                       rasterize(fit_polygon_to_box(shape, 51.2, (6.4, 6.4)), 64, 64)
                       ) >= 0.75:
            continue
        size = float(rng.uniform(lo, hi))
        if size + 4 >= min(w, h):
            continue
        x = float(rng.uniform(2, w - size - 2))
        y = float(rng.uniform(2, h - size - 2))
        layout = None
        if cfg.complex_objects:
            layout = _sample_sub_layout(shape, cfg.sub_object_count, rng)
        footprint, part_masks = _render_object(shape, layout, size, (x, y), (w, h))
        if (footprint & occupied).any():
            continue
        ids = _draw_distinct(rng, unseen, len(part_masks), exclude={bg_id})
        parts = []
        for m, tid in zip(part_masks, ids):
            phase = sample_phase(unseen.get(tid), rng)
            apply_texture(image, m, unseen.get(tid), phase)
            parts.append({"rle": io.rle_encode(m), "texture_id": tid,
                          "phase": list(phase)})
        occupied |= footprint
        return {"is_target": False, "parts": parts}
    raise ProbeError(f"scene {index}: no room for an inserted distractor")


# --------------------------------------------------------------------------
# aff: whole-image isometries

def apply_aff(arr: np.ndarray, tag: str) -> np.ndarray:
    if tag == "rot90":
        return np.rot90(arr, 1).copy()
    if tag == "rot180":
        return np.rot90(arr, 2).copy()
    if tag == "rot270":
        return np.rot90(arr, 3).copy()
    if tag == "flip_h":
        return arr[:, ::-1].copy()
    if tag == "flip_v":
        return arr[::-1].copy()
    raise ProbeError(f"unknown isometry tag {tag!r}")


def invert_aff(arr: np.ndarray, tag: str) -> np.ndarray:
    inverse = {"rot90": "rot270", "rot270": "rot90"}
    return apply_aff(arr, inverse.get(tag, tag))


def _usable_aff_tags(cfg: FeatureConfig) -> list[str]:
    """Drop tags invalid for the canvas or mapping the target onto itself."""
    w, h = cfg.canvas
    tags = list(AFF_TAGS) if w == h else ["rot180", "flip_h", "flip_v"]
    ref = rasterize(fit_polygon_to_box(target_shape(cfg), 51.2, (6.4, 6.4)), 64, 64)
    usable = [t for t in tags if aligned_iou(ref, apply_aff(ref, t)) < _SELF_MAP_IOU]
    if not usable:
        raise ProbeError(
            "target shape is symmetric under every isometry; choose a different "
            "target_shape_seed")
    return usable


def make_aff(val_dir: str | Path, out_dir: str | Path, seed: int = 0,
             force: bool = False) -> dict[str, Any]:
    """Per scene, apply one isometry to image and mask identically."""
    val_dir = Path(val_dir)
    manifest = io.read_manifest(val_dir)
    cfg = FeatureConfig.from_json(manifest["config"])
    tags = _usable_aff_tags(cfg)
    out_dir = io.require_empty_or_force(out_dir, force)
    io.ensure_dataset_dirs(out_dir)

    scene_meta = []
    for index, paths in _scene_records(val_dir, manifest):
        rng = child_rng(seed, DOMAIN_PROBE, index)
        tag = tags[int(rng.integers(0, len(tags)))]
        image = io.load_image(paths["image"])
        mask = io.load_mask(paths["mask"])
        out_paths = io.scene_paths(out_dir, index)
        io.save_image(out_paths["image"], apply_aff(image, tag))
        io.save_mask(out_paths["mask"], apply_aff(mask, tag))
        instances = _map_instance_masks(io.read_instances(val_dir, index),
                                        lambda m, _t=tag: apply_aff(m, _t))
        io.write_json(out_paths["instances"], _strip_phases(instances))
        scene_meta.append({"index": index, "tag": tag})

    io.write_manifest(out_dir, _probe_manifest(manifest, "aff", seed))
    probe = {
        "format_version": io.FORMAT_VERSION,
        "kind": "aff",
        "seed": int(seed),
        "source_manifest_hash": io.manifest_hash(val_dir),
        "params": {"tags": tags},
        "scenes": scene_meta,
    }
    io.write_probe_meta(out_dir, probe)
    return probe


# --------------------------------------------------------------------------
# shuf: 4x4 patch shuffle

def _grid_patches(arr: np.ndarray) -> list[np.ndarray]:
    h, w = arr.shape[:2]
    ph, pw = h // SHUF_GRID, w // SHUF_GRID
    return [arr[r * ph:(r + 1) * ph, c * pw:(c + 1) * pw]
            for r in range(SHUF_GRID) for c in range(SHUF_GRID)]


def apply_shuf(arr: np.ndarray, permutation: list[int] | np.ndarray) -> np.ndarray:
    """Slot i of the output holds source patch permutation[i]."""
    perm = list(int(p) for p in permutation)
    if sorted(perm) != list(range(SHUF_GRID * SHUF_GRID)):
        raise ProbeError(f"not a permutation of 0..15: {perm}")
    h, w = arr.shape[:2]
    if h % SHUF_GRID or w % SHUF_GRID:
        raise ProbeError(f"dims {w}x{h} not divisible by {SHUF_GRID}")
    patches = _grid_patches(arr)
    out = np.empty_like(arr)
    ph, pw = h // SHUF_GRID, w // SHUF_GRID
    for slot, src in enumerate(perm):
        r, c = divmod(slot, SHUF_GRID)
        out[r * ph:(r + 1) * ph, c * pw:(c + 1) * pw] = patches[src]
    return out


def invert_shuf(arr: np.ndarray, permutation: list[int] | np.ndarray) -> np.ndarray:
    return apply_shuf(arr, np.argsort(np.asarray(permutation)))


def make_shuf(val_dir: str | Path, out_dir: str | Path, seed: int = 0,
              force: bool = False) -> dict[str, Any]:
    """Per scene, one non-identity patch permutation applied to image and mask."""
    val_dir = Path(val_dir)
    manifest = io.read_manifest(val_dir)
    cfg = FeatureConfig.from_json(manifest["config"])
    w, h = cfg.canvas
    if w % SHUF_GRID or h % SHUF_GRID:
        raise ProbeError(f"canvas {w}x{h} not divisible by {SHUF_GRID}; cannot shuffle")
    out_dir = io.require_empty_or_force(out_dir, force)
    io.ensure_dataset_dirs(out_dir)

    n_cells = SHUF_GRID * SHUF_GRID
    scene_meta = []
    for index, paths in _scene_records(val_dir, manifest):
        rng = child_rng(seed, DOMAIN_PROBE, index)
        while True:
            perm = rng.permutation(n_cells)
            if not np.array_equal(perm, np.arange(n_cells)):
                break
        image = io.load_image(paths["image"])
        mask = io.load_mask(paths["mask"])
        out_paths = io.scene_paths(out_dir, index)
        io.save_image(out_paths["image"], apply_shuf(image, perm))
        io.save_mask(out_paths["mask"], apply_shuf(mask, perm))
        instances = _map_instance_masks(io.read_instances(val_dir, index),
                                        lambda m, _p=perm: apply_shuf(m, _p))
        io.write_json(out_paths["instances"], _strip_phases(instances))
        scene_meta.append({"index": index, "permutation": perm.tolist()})

    io.write_manifest(out_dir, _probe_manifest(manifest, "shuf", seed))
    probe = {
        "format_version": io.FORMAT_VERSION,
        "kind": "shuf",
        "seed": int(seed),
        "source_manifest_hash": io.manifest_hash(val_dir),
        "params": {"grid": SHUF_GRID},
        "scenes": scene_meta,
    }
    io.write_probe_meta(out_dir, probe)
    return probe


# --------------------------------------------------------------------------
# brightness grid

def apply_brightness(image: np.ndarray, target_mask: np.ndarray,
                     fg_gain: float, bg_gain: float) -> np.ndarray:
    """Scale target pixels by fg_gain and the rest by bg_gain, clamped."""
    if fg_gain <= 0 or bg_gain <= 0:
        raise ProbeError("brightness gains must be positive")
    out = image.astype(np.float64)
    fg = np.asarray(target_mask, dtype=bool)
    out[fg] *= fg_gain
    out[~fg] *= bg_gain
    return np.rint(np.clip(out, 0, 255)).astype(np.uint8)


def make_brightness(val_dir: str | Path, out_dir: str | Path, fg_gain: float,
                    bg_gain: float, force: bool = False) -> dict[str, Any]:
    """One gain pair -> one derived dataset; masks are copied unchanged."""
    val_dir = Path(val_dir)
    manifest = io.read_manifest(val_dir)
    out_dir = io.require_empty_or_force(out_dir, force)
    io.ensure_dataset_dirs(out_dir)
    scene_meta = []
    for index, paths in _scene_records(val_dir, manifest):
        image = io.load_image(paths["image"])
        mask = io.load_mask(paths["mask"])
        out_paths = io.scene_paths(out_dir, index)
        io.save_image(out_paths["image"], apply_brightness(image, mask, fg_gain, bg_gain))
        _copy_scene_masks(val_dir, out_dir, index)
        shutil.copyfile(paths["instances"], out_paths["instances"])
        scene_meta.append({"index": index})
    io.write_manifest(out_dir, _probe_manifest(manifest, "brightness", 0))
    probe = {
        "format_version": io.FORMAT_VERSION,
        "kind": "brightness",
        "seed": 0,
        "source_manifest_hash": io.manifest_hash(val_dir),
        "params": {"fg_gain": float(fg_gain), "bg_gain": float(bg_gain)},
        "scenes": scene_meta,
    }
    io.write_probe_meta(out_dir, probe)
    return probe


def brightness_grid(val_dir: str | Path, out_root: str | Path,
                    gains: tuple[float, ...] = BRIGHTNESS_GAINS,
                    force: bool = False) -> list[dict[str, Any]]:
    """The full fg x bg grid; 10x10 by default."""
    out_root = Path(out_root)
    metas = []
    for fg in gains:
        for bg in gains:
            sub = out_root / f"fg_{fg:g}_bg_{bg:g}"
            metas.append(make_brightness(val_dir, sub, fg, bg, force=force))
    return metas


# --------------------------------------------------------------------------
# elastic series

def _elastic_scene(val_dir: Path, cfg: FeatureConfig, pool: TexturePool,
                   index: int, degree: int, seed: int) -> tuple[np.ndarray, np.ndarray, dict[str, Any], int]:
    """Rebuild one scene with all object masks warped by a shared field.

    The field direction depends only on (seed, index, attempt), so the same
    scene warps along the same field at every degree, scaled by degree.
    """
    instances = io.read_instances(val_dir, index)
    h, w = (int(v) for v in instances["canvas"][::-1])
    bg = instances["background"]
    image = np.empty((h, w, 3), dtype=np.uint8)
    apply_texture(image, np.ones((h, w), dtype=bool), pool.get(bg["texture_id"]),
                  tuple(bg["phase"]))

    unit = elastic_unit((h, w))
    for attempt in range(_ELASTIC_RETRIES):
        rng = child_rng(seed, DOMAIN_ELASTIC, index, attempt)
        field = None
        if degree > 0:
            field = displacement_field((h, w), degree * unit, rng)
        out_image = image.copy()
        target_mask = np.zeros((h, w), dtype=bool)
        new_instances = []
        for inst in instances["instances"]:
            parts = []
            for p in inst["parts"]:
                m = io.rle_decode(p["rle"])
                if field is not None:
                    m = warp_mask(m, field)
                apply_texture(out_image, m, pool.get(p["texture_id"]),
                              tuple(p["phase"]))
                if inst["is_target"]:
                    target_mask |= m
                parts.append({"rle": io.rle_encode(m), "texture_id": p["texture_id"],
                              "phase": list(p["phase"])})
            new_instances.append({"is_target": inst["is_target"], "parts": parts})
        _, n_components = ndimage.label(target_mask)
        if degree == 0 or (target_mask.any() and n_components <= _MAX_COMPONENTS):
            meta = dict(instances)
            meta["instances"] = new_instances
            return out_image, target_mask, meta, attempt
    raise ProbeError(
        f"scene {index}: deformation at degree {degree} keeps shattering the mask")


def make_elastic(val_dir: str | Path, out_dir: str | Path, degree: int,
                 pool: TexturePool | None = None, seed: int = 0,
                 force: bool = False) -> dict[str, Any]:
    """Warp all object masks by a smooth random field and retexture them in
    place; labels are the warped target masks. Degree 0 reproduces the
    source scenes bit-exactly.
    """
    if not 0 <= degree <= 10:
        raise ProbeError(f"degree {degree} outside [0, 10]")
    val_dir = Path(val_dir)
    manifest = io.read_manifest(val_dir)
    if pool is None:
        from .textures import pool_from_origin
        pool = pool_from_origin(manifest["seen_pool"])
    cfg = FeatureConfig.from_json(manifest["config"])
    out_dir = io.require_empty_or_force(out_dir, force)
    io.ensure_dataset_dirs(out_dir)
    scene_meta = []
    for index, _paths in _scene_records(val_dir, manifest):
        image, mask, meta, attempt = _elastic_scene(val_dir, cfg, pool, index,
                                                    degree, seed)
        out_paths = io.scene_paths(out_dir, index)
        io.save_image(out_paths["image"], image)
        io.save_mask(out_paths["mask"], mask)
        io.write_json(out_paths["instances"], meta)
        scene_meta.append({"index": index, "attempt": attempt})
    io.write_manifest(out_dir, _probe_manifest(manifest, "elastic", seed))
    probe = {
        "format_version": io.FORMAT_VERSION,
        "kind": "elastic",
        "seed": int(seed),
        "source_manifest_hash": io.manifest_hash(val_dir),
        "params": {"degree": int(degree)},
        "scenes": scene_meta,
    }
    io.write_probe_meta(out_dir, probe)
    return probe


def elastic_series(val_dir: str | Path, out_root: str | Path,
                   degrees: tuple[int, ...] = ELASTIC_DEGREES,
                   pool: TexturePool | None = None, seed: int = 0,
                   force: bool = False) -> list[dict[str, Any]]:
    out_root = Path(out_root)
    return [make_elastic(val_dir, out_root / f"degree_{d}", d, pool=pool,
                         seed=seed, force=force) for d in degrees]
