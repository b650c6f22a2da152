"""Scene and dataset composition.

A scene holds one target object whose footprint shape is constant across the
dataset, plus (unless singular) one random-shape distractor. Complex objects
are a single footprint polygon whose interior is split into a base region
and ``sub_object_count`` sub-polygon regions, each with its own texture; the
object mask is always the filled footprint.

All stochastic choices come from per-scene child streams and are drawn in
normalized coordinates, so a scene index renders consistently at any canvas
size and datasets regenerate byte-identically.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

import numpy as np
from scipy import ndimage

from . import io
from .errors import ConfigError, GenerationError, PlacementError
from .geometry import (Polygon, aligned_iou, fit_polygon_to_box, polygon_contains,
                       rasterize, sample_polygon)
from .rng import DOMAIN_LAYOUT, DOMAIN_PARTITION, DOMAIN_SCENE, child_rng
from .textures import (PoolPartition, TexturePool, apply_texture, partition_pool,
                       sample_phase)

_PLACE_TRIES = 64
_SUB_TRIES = 64
_SHAPE_TRIES = 64
# Alignment IOU above which a candidate distractor shape is rejected as too
# close to the target shape. Sits just below the shape-oracle acceptance
# threshold (0.8), so no distractor can alias the target under alignment;
# random star polygons pair at 0.55-0.8, so a lower cap would reject nearly
# every candidate.
_DISTRACTOR_IOU_CAP = 0.75
# Minimum gap between object boxes, as a fraction of the canvas short side.
_GAP_FRACTION = 0.01
# Reference raster for canvas-independent shape comparisons.
_REF_SIDE = 64
# Unit-square occupancy raster used for placement; _OCC_GAP cells of clearance
# between footprints (must exceed _GAP_FRACTION * _OCC_SIDE plus rounding).
_OCC_SIDE = 256
_OCC_GAP = 4
_OCC_PAD = _OCC_GAP + 4
# Full geometry re-draws allowed before a scene is abandoned.
_SCENE_TRIES = 8

SWEEP_SIZES = tuple(range(160, 481, 32))


@dataclass(frozen=True)
class FeatureConfig:
    """Which features of a scene are discriminative for the target."""

    complex_objects: bool = False
    texture_feature: bool = False
    singular: bool = False
    semi_singular: bool = False
    structure_feature: bool = False
    target_shape_seed: int = 0
    # Keyed separately from the master seed so train/val splits generated
    # with different seeds still agree on which textures are predictive.
    partition_seed: int = 0
    sub_object_count: int = 3
    canvas: tuple[int, int] = (256, 256)
    size_range: tuple[float, float] = (100.0, 150.0)

    def __post_init__(self):
        if self.singular and self.semi_singular:
            raise ConfigError("singular and semi_singular cannot both be set")
        if (self.semi_singular or self.structure_feature) and not self.complex_objects:
            raise ConfigError("semi_singular and structure_feature require complex_objects")
        w, h = self.canvas
        if w < 16 or h < 16:
            raise ConfigError(f"canvas {w}x{h} too small")
        lo, hi = self.size_range
        if not 0 < lo <= hi:
            raise ConfigError(f"invalid size_range {self.size_range}")
        if hi > min(w, h) - 4:
            raise ConfigError(f"objects of size {hi} cannot fit canvas {w}x{h}")
        if self.complex_objects and not 1 <= self.sub_object_count <= 8:
            raise ConfigError("sub_object_count must lie in [1, 8]")

    def to_json(self) -> dict[str, Any]:
        return {
            "complex_objects": self.complex_objects,
            "texture_feature": self.texture_feature,
            "singular": self.singular,
            "semi_singular": self.semi_singular,
            "structure_feature": self.structure_feature,
            "target_shape_seed": self.target_shape_seed,
            "partition_seed": self.partition_seed,
            "sub_object_count": self.sub_object_count,
            "canvas": [self.canvas[0], self.canvas[1]],
            "size_range": [self.size_range[0], self.size_range[1]],
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "FeatureConfig":
        try:
            return cls(
                complex_objects=bool(obj["complex_objects"]),
                texture_feature=bool(obj["texture_feature"]),
                singular=bool(obj["singular"]),
                semi_singular=bool(obj["semi_singular"]),
                structure_feature=bool(obj["structure_feature"]),
                target_shape_seed=int(obj["target_shape_seed"]),
                partition_seed=int(obj["partition_seed"]),
                sub_object_count=int(obj["sub_object_count"]),
                canvas=(int(obj["canvas"][0]), int(obj["canvas"][1])),
                size_range=(float(obj["size_range"][0]), float(obj["size_range"][1])),
            )
        except (KeyError, TypeError, IndexError) as e:
            raise ConfigError(f"malformed feature config: {e}") from e


@dataclass(frozen=True)
class StructureLayout:
    """Shared sub-shape and fixed relative placement of sub-objects.

    Offsets and scale are fractions of the footprint bounding box, so the
    layout renders consistently at any object size.
    """

    sub_shape: Polygon
    offsets: tuple[tuple[float, float], ...]
    scale: float


@dataclass
class PaintedPart:
    """One same-texture region of an object, as actually visible."""

    mask: np.ndarray
    texture_id: str
    phase: tuple[int, int]


@dataclass
class PaintedInstance:
    is_target: bool
    parts: list[PaintedPart]

    @property
    def mask(self) -> np.ndarray:
        out = self.parts[0].mask.copy()
        for p in self.parts[1:]:
            out |= p.mask
        return out

    @property
    def texture_ids(self) -> list[str]:
        return [p.texture_id for p in self.parts]


@dataclass
class SceneInstance:
    image: np.ndarray
    target_mask: np.ndarray
    instances: list[PaintedInstance]
    background_texture_id: str
    background_phase: tuple[int, int]
    config: FeatureConfig
    seed_key: tuple[int, ...]

    @property
    def instance_masks(self) -> list[tuple[np.ndarray, bool, list[str]]]:
        return [(inst.mask, inst.is_target, inst.texture_ids) for inst in self.instances]

    def instances_json(self, index: int) -> dict[str, Any]:
        return {
            "format_version": io.FORMAT_VERSION,
            "scene_index": index,
            "seed": list(self.seed_key),
            "canvas": [self.config.canvas[0], self.config.canvas[1]],
            "background": {"texture_id": self.background_texture_id,
                           "phase": list(self.background_phase)},
            "instances": [
                {
                    "is_target": inst.is_target,
                    "parts": [
                        {"rle": io.rle_encode(p.mask), "texture_id": p.texture_id,
                         "phase": list(p.phase)}
                        for p in inst.parts
                    ],
                }
                for inst in self.instances
            ],
        }


def target_shape(cfg: FeatureConfig) -> Polygon:
    """The dataset's constant target footprint, unit circumradius."""
    return sample_polygon(child_rng(cfg.target_shape_seed, DOMAIN_LAYOUT, 0))


def _shape_ref_mask(shape: Polygon) -> np.ndarray:
    return rasterize(fit_polygon_to_box(shape, _REF_SIDE * 0.8,
                                        (_REF_SIDE * 0.1, _REF_SIDE * 0.1)),
                     _REF_SIDE, _REF_SIDE)


def _sample_sub_layout(footprint: Polygon, count: int, rng: np.random.Generator,
                       shared_shape: Polygon | None = None) -> StructureLayout:
    """Place ``count`` disjoint sub-polygons strictly inside the unit footprint.

    Containment and disjointness are tested in continuous coordinates so the
    layout is valid at every render scale.
    """
    min_x, min_y, max_x, max_y = footprint.aabb()
    span = max(max_x - min_x, max_y - min_y)
    sub_shape = shared_shape
    scale = 0.30
    for attempt in range(_SUB_TRIES):
        if sub_shape is None or attempt:
            sub_shape = shared_shape if shared_shape is not None else sample_polygon(
                rng, vertex_count=(4, 8))
        offsets: list[tuple[float, float]] = []
        placed: list[Polygon] = []
        ok = True
        for _ in range(count):
            found = False
            for _ in range(_SUB_TRIES):
                fx, fy = rng.uniform(0.05, 0.95 - scale, size=2)
                candidate = fit_polygon_to_box(
                    sub_shape, scale * span,
                    (min_x + fx * span, min_y + fy * span))
                if not all(polygon_contains(footprint, v) for v in candidate.vertices):
                    continue
                if any(_boxes_touch(candidate.aabb(), q.aabb(), span * 0.02)
                       for q in placed):
                    continue
                placed.append(candidate)
                offsets.append((float(fx), float(fy)))
                found = True
                break
            if not found:
                ok = False
                break
        if ok:
            return StructureLayout(sub_shape=sub_shape, offsets=tuple(offsets), scale=scale)
        scale *= 0.85
    raise GenerationError(f"cannot place {count} sub-objects inside footprint")


def structure_layout(cfg: FeatureConfig) -> StructureLayout:
    """The dataset-wide sub-object arrangement used when structure is set."""
    return _sample_sub_layout(target_shape(cfg), cfg.sub_object_count,
                              child_rng(cfg.target_shape_seed, DOMAIN_LAYOUT, 1))


def _boxes_touch(a: tuple[float, float, float, float],
                 b: tuple[float, float, float, float], gap: float) -> bool:
    return not (a[2] + gap <= b[0] or b[2] + gap <= a[0]
                or a[3] + gap <= b[1] or b[3] + gap <= a[1])


def _new_occupancy() -> np.ndarray:
    side = _OCC_SIDE + 2 * _OCC_PAD
    return np.zeros((side, side), dtype=bool)


def _occupancy_template(shape: Polygon, size_frac: float) -> np.ndarray:
    """Footprint raster of a shape at its unit-box scale on the placement grid."""
    side = max(2, int(np.ceil(size_frac * _OCC_SIDE)) + 1)
    placed = fit_polygon_to_box(shape, size_frac * _OCC_SIDE, (0.0, 0.0))
    return rasterize(placed, side, side)


def _place_mask(rng: np.random.Generator, template: np.ndarray, size_frac: float,
                occupancy: np.ndarray, gap: float) -> tuple[float, float]:
    """Unit-square anchor at which template's footprint clears occupancy.

    Overlap is tested on a fixed-resolution unit grid, so outcomes (and hence
    the draw sequence) do not depend on the output canvas size. Footprints
    are kept >= _OCC_GAP cells apart, which dominates grid quantization, so
    accepted layouts never overlap at any canvas resolution.
    """
    room = 1.0 - size_frac - 2.0 * gap
    if room <= 0:
        raise PlacementError(f"object fraction {size_frac:.3f} exceeds canvas")
    grown = ndimage.binary_dilation(np.pad(template, _OCC_GAP),
                                    structure=np.ones((3, 3), dtype=bool),
                                    iterations=_OCC_GAP)
    th, tw = template.shape
    gh, gw = grown.shape
    for _ in range(_PLACE_TRIES):
        ux, uy = rng.uniform(0.0, 1.0, size=2)
        x = gap + ux * room
        y = gap + uy * room
        gx = _OCC_PAD + int(round(x * _OCC_SIDE))
        gy = _OCC_PAD + int(round(y * _OCC_SIDE))
        window = occupancy[gy - _OCC_GAP:gy - _OCC_GAP + gh,
                           gx - _OCC_GAP:gx - _OCC_GAP + gw]
        if not (window & grown).any():
            occupancy[gy:gy + th, gx:gx + tw] |= template
            return x, y
    raise PlacementError("placement budget exhausted")


def _render_object(shape: Polygon, layout: StructureLayout | None,
                   size_px: float, anchor_px: tuple[float, float],
                   canvas: tuple[int, int]) -> tuple[np.ndarray, list[np.ndarray]]:
    """Rasterize footprint and interior sub-regions; returns (footprint mask,
    disjoint part masks whose union is the footprint)."""
    w, h = canvas
    placed = fit_polygon_to_box(shape, size_px, anchor_px, canvas=(w, h))
    footprint = rasterize(placed, w, h)
    if layout is None:
        return footprint, [footprint]
    min_x, min_y, max_x, max_y = placed.aabb()
    span = max(max_x - min_x, max_y - min_y)
    sub_masks = []
    covered = np.zeros_like(footprint)
    for fx, fy in layout.offsets:
        sub = fit_polygon_to_box(layout.sub_shape, layout.scale * span,
                                 (min_x + fx * span, min_y + fy * span))
        m = rasterize(sub, w, h) & footprint & ~covered
        sub_masks.append(m)
        covered |= m
    base = footprint & ~covered
    return footprint, [base] + sub_masks


def _pick_ids(rng: np.random.Generator, ids: list[str], k: int,
              exclude: set[str] = frozenset()) -> list[str]:
    """k draws without replacement, falling back to with-replacement when the
    set is too small; never returns excluded ids unless unavoidable."""
    avail = [i for i in ids if i not in exclude] or list(ids)
    if k <= len(avail):
        picks = rng.choice(len(avail), size=k, replace=False)
    else:
        picks = rng.integers(0, len(avail), size=k)
    return [avail[int(i)] for i in picks]


def generate_scene(cfg: FeatureConfig, pool: TexturePool, partition: PoolPartition,
                   rng: np.random.Generator, *,
                   shape: Polygon | None = None,
                   layout: StructureLayout | None = None,
                   seed_key: tuple[int, ...] = ()) -> SceneInstance:
    """Compose one scene. ``shape``/``layout`` default to the dataset-level
    values derived from cfg; pass them in when generating many scenes.
    """
    w, h = cfg.canvas
    short = min(w, h)
    if shape is None:
        shape = target_shape(cfg)
    if cfg.structure_feature and layout is None:
        layout = structure_layout(cfg)

    lo, hi = cfg.size_range
    gap = _GAP_FRACTION
    last_failure: PlacementError | None = None
    for _ in range(_SCENE_TRIES):
        try:
            occupancy = _new_occupancy()

            # Target geometry. Sizes and anchors are sampled as canvas
            # fractions, placement tested on the canvas-independent grid.
            t_size = float(rng.uniform(lo, hi))
            t_frac = t_size / short
            tx, ty = _place_mask(rng, _occupancy_template(shape, t_frac),
                                 t_frac, occupancy, gap)
            if cfg.complex_objects:
                t_layout = layout if cfg.structure_feature else _sample_sub_layout(
                    shape, cfg.sub_object_count, rng)
            else:
                t_layout = None

            # Distractor geometry. Its shape must not alias the target shape.
            d_shape = d_layout = None
            d_frac = dx = dy = 0.0
            if not cfg.singular:
                ref = _shape_ref_mask(shape)
                for attempt in range(_SHAPE_TRIES):
                    candidate = sample_polygon(rng)
                    if aligned_iou(ref, _shape_ref_mask(candidate)) < _DISTRACTOR_IOU_CAP:
                        d_shape = candidate
                        break
                if d_shape is None:
                    raise GenerationError(
                        f"no distractor shape distinct from target after {_SHAPE_TRIES} tries")
                d_size = float(rng.uniform(lo, hi))
                d_frac = d_size / short
                dx, dy = _place_mask(rng, _occupancy_template(d_shape, d_frac),
                                     d_frac, occupancy, gap)
                if cfg.complex_objects and not cfg.semi_singular:
                    d_layout = _sample_sub_layout(d_shape, cfg.sub_object_count, rng)
            break
        except PlacementError as e:
            last_failure = e
    else:
        raise last_failure

    # Texture assignment. Background first, then target parts, then distractor.
    if cfg.texture_feature:
        bg_ids, t_ids_pool, d_ids_pool = (list(partition.background),
                                          list(partition.target),
                                          list(partition.non_target))
    else:
        bg_ids = t_ids_pool = d_ids_pool = pool.ids

    bg_id = _pick_ids(rng, bg_ids, 1)[0]
    bg_tex = pool.get(bg_id)
    bg_phase = sample_phase(bg_tex, rng)

    t_parts = 1 + (cfg.sub_object_count if t_layout is not None else 0)
    t_ids = _pick_ids(rng, t_ids_pool, t_parts, exclude={bg_id})
    t_phases = []
    for tid in t_ids:
        t_phases.append(sample_phase(pool.get(tid), rng))

    d_ids: list[str] = []
    d_phases: list[tuple[int, int]] = []
    if d_shape is not None:
        d_parts = 1 + (cfg.sub_object_count if d_layout is not None else 0)
        d_ids = _pick_ids(rng, d_ids_pool, d_parts, exclude={bg_id})
        for did in d_ids:
            d_phases.append(sample_phase(pool.get(did), rng))

    # Render. All sampling above is canvas-independent; rasterization happens
    # only from here on.
    image = np.empty((h, w, 3), dtype=np.uint8)
    full = np.ones((h, w), dtype=bool)
    apply_texture(image, full, bg_tex, bg_phase)

    t_mask, t_part_masks = _render_object(
        shape, t_layout, t_frac * short, (tx * w, ty * h), cfg.canvas)
    instances = [PaintedInstance(is_target=True, parts=[
        PaintedPart(mask=m, texture_id=tid, phase=ph)
        for m, tid, ph in zip(t_part_masks, t_ids, t_phases)])]

    if d_shape is not None:
        _, d_part_masks = _render_object(
            d_shape, d_layout, d_frac * short, (dx * w, dy * h), cfg.canvas)
        instances.append(PaintedInstance(is_target=False, parts=[
            PaintedPart(mask=m, texture_id=did, phase=ph)
            for m, did, ph in zip(d_part_masks, d_ids, d_phases)]))

    for inst in instances:
        for part in inst.parts:
            apply_texture(image, part.mask, pool.get(part.texture_id), part.phase)

    return SceneInstance(image=image, target_mask=t_mask, instances=instances,
                         background_texture_id=bg_id, background_phase=bg_phase,
                         config=cfg, seed_key=tuple(seed_key))


def dataset_manifest(cfg: FeatureConfig, n: int, master_seed: int,
                     pool: TexturePool, partition: PoolPartition) -> dict[str, Any]:
    scenes = []
    for i in range(n):
        name = io.scene_name(i)
        scenes.append({
            "index": i,
            "seed": [int(master_seed), DOMAIN_SCENE, i],
            "image": f"{io.IMAGE_DIR}/{name}.png",
            "mask": f"{io.MASK_DIR}/{name}.png",
            "instances": f"{io.INSTANCE_DIR}/{name}.json",
        })
    return {
        "format_version": io.FORMAT_VERSION,
        "kind": "dataset",
        "master_seed": int(master_seed),
        "canvas": [cfg.canvas[0], cfg.canvas[1]],
        "config": cfg.to_json(),
        "seen_pool": pool.origin,
        "partition": partition.to_json(),
        "scenes": scenes,
    }


def generate_dataset(cfg: FeatureConfig, n: int, master_seed: int,
                     out: str | Path, pool: TexturePool) -> dict[str, Any]:
    """Write n scenes plus manifest under ``out``; returns the manifest."""
    if n < 1:
        raise ConfigError("dataset size must be >= 1")
    out = io.ensure_dataset_dirs(out)
    partition = partition_pool(pool, child_rng(cfg.partition_seed, DOMAIN_PARTITION, 0))
    shape = target_shape(cfg)
    layout = structure_layout(cfg) if cfg.structure_feature else None
    for i in range(n):
        seed_key = (int(master_seed), DOMAIN_SCENE, i)
        try:
            scene = generate_scene(cfg, pool, partition, child_rng(*seed_key),
                                   shape=shape, layout=layout, seed_key=seed_key)
        except PlacementError as e:
            raise GenerationError(f"scene {i} (seed {seed_key}): {e}") from e
        io.write_scene(out, i, scene.image, scene.target_mask,
                       scene.instances_json(i))
    manifest = dataset_manifest(cfg, n, master_seed, pool, partition)
    io.write_manifest(out, manifest)
    return manifest


def regenerate_from_manifest(manifest: dict[str, Any], out: str | Path,
                             pool: TexturePool | None = None) -> dict[str, Any]:
    """Rebuild every file a manifest describes; output is byte-identical to
    the original generation run."""
    from .textures import pool_from_origin
    cfg = FeatureConfig.from_json(manifest["config"])
    if pool is None:
        pool = pool_from_origin(manifest["seen_pool"])
    return generate_dataset(cfg, len(manifest["scenes"]),
                            int(manifest["master_seed"]), out, pool)


def generate_size_sweep(cfg: FeatureConfig, master_seed: int, out: str | Path,
                        pool: TexturePool, n: int = 200) -> list[dict[str, Any]]:
    """Render the same scene seeds at canvas sides 160..480 step 32.

    Object sizes scale with the canvas, mirroring a resize of one underlying
    scene; cfg supplies the reference canvas its size_range refers to.
    """
    if any((cfg.complex_objects, cfg.texture_feature, cfg.singular,
            cfg.semi_singular, cfg.structure_feature)):
        raise ConfigError("size sweep expects a shape-only config")
    out = Path(out)
    ref_short = min(cfg.canvas)
    manifests = []
    for side in SWEEP_SIZES:
        factor = side / ref_short
        scaled = replace(cfg, canvas=(side, side),
                         size_range=(cfg.size_range[0] * factor,
                                     cfg.size_range[1] * factor))
        manifests.append(generate_dataset(scaled, n, master_seed,
                                          out / f"size_{side}", pool))
    return manifests
