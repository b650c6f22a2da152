"""Reference predictors with known feature reliance.

Oracles are instance-selectors: they choose among a scene's per-object masks
by shape, by texture, or unconditionally, and output the union of selected
masks. Their learned state comes exclusively from the training split;
predict never reads target flags. They exist to bound the bias index from
both ends without training a network.

All three follow the scikit-learn estimator protocol: hyperparameters in
``__init__``, ``fit`` returning self, fitted state in trailing-underscore
attributes.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterator

import numpy as np
from sklearn.base import BaseEstimator

from . import io
from .errors import OracleError
from .geometry import aligned_iou

_TEMPLATE_VOTE_SCENES = 50
_SIGNATURE_SCENES = 200


@dataclass
class InstanceView:
    mask: np.ndarray
    part_masks: list[np.ndarray]
    part_texture_ids: list[str]
    is_target: bool  # consumed by fit only; predict must not read it

    @property
    def dominant_texture_id(self) -> str:
        sizes = [int(m.sum()) for m in self.part_masks]
        return self.part_texture_ids[int(np.argmax(sizes))]

    @property
    def dominant_part_mask(self) -> np.ndarray:
        sizes = [int(m.sum()) for m in self.part_masks]
        return self.part_masks[int(np.argmax(sizes))]


@dataclass
class SceneView:
    index: int
    canvas: tuple[int, int]  # (width, height)
    instances: list[InstanceView]
    image_path: Path | None = None
    _image: np.ndarray | None = None

    @property
    def image(self) -> np.ndarray:
        if self._image is None:
            if self.image_path is None:
                raise OracleError("scene view carries no image")
            self._image = io.load_image(self.image_path)
        return self._image


def scene_view(root: str | Path, index: int) -> SceneView:
    root = Path(root)
    meta = io.read_instances(root, index)
    instances = []
    for inst in meta["instances"]:
        part_masks = [io.rle_decode(p["rle"]) for p in inst["parts"]]
        mask = part_masks[0].copy()
        for m in part_masks[1:]:
            mask |= m
        instances.append(InstanceView(
            mask=mask, part_masks=part_masks,
            part_texture_ids=[p["texture_id"] for p in inst["parts"]],
            is_target=bool(inst["is_target"])))
    w, h = (int(v) for v in meta["canvas"])
    return SceneView(index=index, canvas=(w, h), instances=instances,
                     image_path=io.scene_paths(root, index)["image"])


def iter_scene_views(root: str | Path) -> Iterator[SceneView]:
    root = Path(root)
    manifest = io.read_manifest(root)
    for index in io.scene_indices(manifest):
        yield scene_view(root, index)


def _empty_mask(view: SceneView) -> np.ndarray:
    w, h = view.canvas
    return np.zeros((h, w), dtype=bool)


def _union(view: SceneView, chosen: list[InstanceView]) -> np.ndarray:
    out = _empty_mask(view)
    for inst in chosen:
        out |= inst.mask
    return out


class _DatasetOracle(BaseEstimator):
    """Shared fit plumbing and directory-level prediction."""

    def _target_views(self, train_dir: str | Path) -> Iterator[tuple[SceneView, InstanceView]]:
        count = 0
        for view in iter_scene_views(train_dir):
            for inst in view.instances:
                if inst.is_target:
                    count += 1
                    yield view, inst
        if count == 0:
            raise OracleError(f"no target instances in training set {train_dir}")

    def predict(self, X):
        if isinstance(X, SceneView):
            return self._predict_view(X)
        return [self._predict_view(v) for v in X]

    def _predict_view(self, view: SceneView) -> np.ndarray:
        raise NotImplementedError

    def predict_dataset(self, dataset_dir: str | Path, out_dir: str | Path) -> int:
        """Write one prediction PNG per scene; returns the scene count."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        n = 0
        for view in iter_scene_views(dataset_dir):
            io.save_mask(io.prediction_path(out_dir, view.index),
                         self._predict_view(view))
            n += 1
        return n


class ShapeTemplateOracle(_DatasetOracle):
    """Selects instances whose centroid-and-scale-aligned IOU with a learned
    target template clears ``theta``; ignores texture entirely.
    """

    def __init__(self, theta: float = 0.8, vote_scenes: int = _TEMPLATE_VOTE_SCENES):
        self.theta = theta
        self.vote_scenes = vote_scenes

    def fit(self, X, y=None):
        votes = None
        areas = []
        masks = []
        for _view, inst in self._target_views(X):
            masks.append(inst.mask)
            areas.append(int(inst.mask.sum()))
            if len(masks) >= self.vote_scenes:
                break
        ref = masks[0]
        votes = np.zeros(ref.shape, dtype=np.int32)
        for m in masks:
            votes += _align_like(ref, m)
        self.template_ = votes * 2 >= len(masks)
        self.n_votes_ = len(masks)
        return self

    def _predict_view(self, view: SceneView) -> np.ndarray:
        chosen = [inst for inst in view.instances
                  if inst.mask.any()
                  and inst.mask.shape == self.template_.shape
                  and aligned_iou(self.template_, inst.mask) >= self.theta]
        return _union(view, chosen)


def _align_like(ref: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Resample mask so its centroid and area match ref's (nearest)."""
    from .geometry import mask_centroid
    area_r, area_m = int(ref.sum()), int(mask.sum())
    if area_m == 0:
        return np.zeros_like(ref, dtype=np.int32)
    crx, cry = mask_centroid(ref)
    cmx, cmy = mask_centroid(mask)
    s = np.sqrt(area_m / area_r)
    h, w = ref.shape
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    sx = np.rint(cmx + (xx - crx) * s).astype(np.int64)
    sy = np.rint(cmy + (yy - cry) * s).astype(np.int64)
    valid = (sx >= 0) & (sx < mask.shape[1]) & (sy >= 0) & (sy < mask.shape[0])
    out = np.zeros_like(ref, dtype=np.int32)
    out[valid] = mask[sy[valid], sx[valid]]
    return out


class TextureLookupOracle(_DatasetOracle):
    """Selects instances whose dominant texture was seen on training targets.

    ``mode='id'`` matches recorded texture ids; ``mode='signature'`` ignores
    metadata ids and matches mean-color/contrast signatures measured on the
    image, within Euclidean distance ``tau``.
    """

    def __init__(self, mode: str = "id", tau: float = 25.0,
                 signature_scenes: int = _SIGNATURE_SCENES):
        self.mode = mode
        self.tau = tau
        self.signature_scenes = signature_scenes

    def fit(self, X, y=None):
        if self.mode not in ("id", "signature"):
            raise OracleError(f"unknown texture oracle mode {self.mode!r}")
        ids: set[str] = set()
        signatures: list[np.ndarray] = []
        n = 0
        for view, inst in self._target_views(X):
            if self.mode == "id":
                ids.update(inst.part_texture_ids)
            else:
                signatures.append(_signature(view.image, inst.dominant_part_mask))
                n += 1
                if n >= self.signature_scenes:
                    break
        self.texture_ids_ = frozenset(ids)
        self.signatures_ = (np.vstack(signatures) if signatures
                            else np.empty((0, 4)))
        return self

    def _matches(self, view: SceneView, inst: InstanceView) -> bool:
        if self.mode == "id":
            return inst.dominant_texture_id in self.texture_ids_
        if not self.signatures_.size:
            return False
        sig = _signature(view.image, inst.dominant_part_mask)
        d = np.linalg.norm(self.signatures_ - sig[None, :], axis=1)
        return bool(d.min() <= self.tau)

    def _predict_view(self, view: SceneView) -> np.ndarray:
        chosen = [inst for inst in view.instances
                  if inst.mask.any() and self._matches(view, inst)]
        return _union(view, chosen)


def _signature(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Mean RGB plus gray-level spread over the masked pixels."""
    if not mask.any():
        return np.zeros(4)
    px = image[mask].astype(np.float64)
    gray = px.mean(axis=1)
    return np.array([px[:, 0].mean(), px[:, 1].mean(), px[:, 2].mean(),
                     gray.std()])


class AnyForegroundOracle(_DatasetOracle):
    """Selects every instance; models the singular-training failure mode of
    segmenting any foreground object."""

    def __init__(self):
        pass

    def fit(self, X, y=None):
        for _ in self._target_views(X):
            break
        self.fitted_ = True
        return self

    def _predict_view(self, view: SceneView) -> np.ndarray:
        return _union(view, [i for i in view.instances if i.mask.any()])


ORACLE_KINDS = {
    "shape_template": ShapeTemplateOracle,
    "texture_lookup": TextureLookupOracle,
    "any_foreground": AnyForegroundOracle,
}


def make_oracle(kind: str, **params: Any) -> _DatasetOracle:
    try:
        cls = ORACLE_KINDS[kind]
    except KeyError:
        raise OracleError(f"unknown oracle kind {kind!r}; "
                          f"choose from {sorted(ORACLE_KINDS)}") from None
    return cls(**params)
