"""Overlap metrics, the shape-bias index, receptive-field arithmetic and
run-level report aggregation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from . import io
from .errors import MetricError, ValidationError

PROBE_SETS = ("val", "rm", "aff", "shuf")


@dataclass(frozen=True)
class ProbeScores:
    """Mean IOUs of one model on the validation set and the three probes."""

    iou_val: float
    iou_rm: float
    iou_aff: float
    iou_shuf: float

    def __post_init__(self):
        for name in ("iou_val", "iou_rm", "iou_aff", "iou_shuf"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise MetricError(f"{name}={v} outside [0, 1]")


@dataclass(frozen=True)
class SbiReport:
    pd_rm: float
    pd_aff: float
    pd_shuf: float
    delta_rm: float
    delta_aff: float
    delta_shuf: float
    sbi: float

    def to_json(self) -> dict[str, Any]:
        return {
            "pd": {"rm": self.pd_rm, "aff": self.pd_aff, "shuf": self.pd_shuf},
            "delta": {"rm": self.delta_rm, "aff": self.delta_aff,
                      "shuf": self.delta_shuf},
            "sbi": self.sbi,
        }


def iou(pred: np.ndarray, gt: np.ndarray) -> float:
    """Intersection over union; two empty masks agree perfectly (1.0)."""
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise MetricError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    union = int(np.logical_or(pred, gt).sum())
    if union == 0:
        return 1.0
    return int(np.logical_and(pred, gt).sum()) / union


def performance_drop(iou_foo: float, iou_val: float) -> float:
    """Relative drop vs validation; negative when the probe scores higher."""
    if iou_val <= 0:
        raise MetricError(f"iou_val={iou_val} gives an undefined baseline")
    return 1.0 - iou_foo / iou_val


def sbi(scores: ProbeScores) -> SbiReport:
    """SoftMax-smoothed performance drops, then (delta_aff + delta_shuf) / delta_rm.

    The SoftMax is computed max-shifted; equal IOUs on all four sets yield
    exactly 2.0 in IEEE arithmetic.
    """
    pd_rm = performance_drop(scores.iou_rm, scores.iou_val)
    pd_aff = performance_drop(scores.iou_aff, scores.iou_val)
    pd_shuf = performance_drop(scores.iou_shuf, scores.iou_val)
    pds = np.array([pd_rm, pd_aff, pd_shuf], dtype=np.float64)
    exps = np.exp(pds - pds.max())
    deltas = exps / exps.sum()
    value = (deltas[1] + deltas[2]) / deltas[0]
    return SbiReport(pd_rm=pd_rm, pd_aff=pd_aff, pd_shuf=pd_shuf,
                     delta_rm=float(deltas[0]), delta_aff=float(deltas[1]),
                     delta_shuf=float(deltas[2]), sbi=float(value))


def sbi_closed_form(scores: ProbeScores) -> float:
    """exp(pd_aff - pd_rm) + exp(pd_shuf - pd_rm); the SoftMax normalizer
    cancels, so this equals the report value up to rounding."""
    pd_rm = performance_drop(scores.iou_rm, scores.iou_val)
    pd_aff = performance_drop(scores.iou_aff, scores.iou_val)
    pd_shuf = performance_drop(scores.iou_shuf, scores.iou_val)
    return math.exp(pd_aff - pd_rm) + math.exp(pd_shuf - pd_rm)


# --------------------------------------------------------------------------
# receptive-field arithmetic

@dataclass(frozen=True)
class Stage:
    kernel: int
    dilation: int = 1
    stride: int = 1

    def __post_init__(self):
        if self.kernel < 1 or self.dilation < 1 or self.stride < 1:
            raise ValidationError(f"stage extents must be >= 1: {self}")


@dataclass(frozen=True)
class LayerSpec:
    stages: tuple[Stage, ...]

    def __post_init__(self):
        if not self.stages:
            raise ValidationError("layer spec needs at least one stage")

    @classmethod
    def from_json(cls, obj: Any) -> "LayerSpec":
        if isinstance(obj, dict):
            obj = obj.get("stages")
        if not isinstance(obj, list) or not obj:
            raise ValidationError("layer spec JSON must hold a nonempty stage list")
        stages = []
        for s in obj:
            try:
                stages.append(Stage(kernel=int(s["kernel"]),
                                    dilation=int(s.get("dilation", 1)),
                                    stride=int(s.get("stride", 1))))
            except (KeyError, TypeError, ValueError) as e:
                raise ValidationError(f"malformed stage {s!r}: {e}") from e
        return cls(tuple(stages))

    def to_json(self) -> dict[str, Any]:
        return {"stages": [{"kernel": s.kernel, "dilation": s.dilation,
                            "stride": s.stride} for s in self.stages]}


def receptive_field(spec: LayerSpec) -> int:
    """Pixels of input visible to one output unit after the staged convs.

    Each stage grows the field by (kernel-1)*dilation at the current
    cumulative stride; strides compound afterwards.
    """
    rf = 1
    jump = 1
    for s in spec.stages:
        rf += (s.kernel - 1) * s.dilation * jump
        jump *= s.stride
    return rf


def unet140_spec() -> LayerSpec:
    """Four encoder blocks of two 3x3 convs + 2x2 pool, then a two-conv
    bottleneck; receptive field 140."""
    stages: list[Stage] = []
    for _ in range(4):
        stages += [Stage(3), Stage(3), Stage(2, stride=2)]
    stages += [Stage(3), Stage(3)]
    return LayerSpec(tuple(stages))


def unet210_spec() -> LayerSpec:
    """Same as unet140 with dilation 2 in every layer of encoder blocks 2-4
    (pools keep stride 2 and get effective kernel 3); receptive field 210."""
    stages: list[Stage] = [Stage(3), Stage(3), Stage(2, stride=2)]
    for _ in range(3):
        stages += [Stage(3, dilation=2), Stage(3, dilation=2),
                   Stage(2, dilation=2, stride=2)]
    stages += [Stage(3), Stage(3)]
    return LayerSpec(tuple(stages))


# --------------------------------------------------------------------------
# run-level evaluation

def _mean(values: Iterable[float]) -> float:
    vals = list(values)
    if not vals:
        raise MetricError("mean of an empty sequence")
    return math.fsum(vals) / len(vals)


def evaluate_set(gt_dir: str | Path, pred_dir: str | Path) -> tuple[float, int]:
    """Mean per-image IOU of a prediction directory against a dataset.

    Every scene in the dataset manifest must have a same-named prediction.
    """
    gt_dir = Path(gt_dir)
    manifest = io.read_manifest(gt_dir)
    indices = io.scene_indices(manifest)
    missing = [i for i in indices
               if not io.prediction_path(pred_dir, i).is_file()]
    if missing:
        shown = ", ".join(io.scene_name(i) for i in missing[:10])
        raise MetricError(
            f"{pred_dir}: missing predictions for {len(missing)} scenes: {shown}")
    scores = []
    for index in indices:
        gt = io.load_mask(io.scene_paths(gt_dir, index)["mask"])
        pred = io.load_mask(io.prediction_path(pred_dir, index))
        scores.append(iou(pred, gt))
    return _mean(scores), len(indices)


def _check_probe_source(gt_dir: Path, val_hash: str, name: str) -> None:
    meta = io.read_probe_meta(gt_dir)
    if meta.get("source_manifest_hash") != val_hash:
        raise ValidationError(
            f"{name} probe at {gt_dir} derives from manifest "
            f"{meta.get('source_manifest_hash')!r}, not the supplied validation "
            f"set ({val_hash!r})")


def evaluate_run(val: tuple[str | Path, str | Path],
                 rm: tuple[str | Path, str | Path],
                 aff: tuple[str | Path, str | Path],
                 shuf: tuple[str | Path, str | Path],
                 check_sources: bool = True) -> dict[str, Any]:
    """Full SBI evaluation; each argument is (ground-truth dir, prediction dir).

    Probe directories must record the validation manifest as their source
    unless check_sources is disabled.
    """
    dirs = {"val": val, "rm": rm, "aff": aff, "shuf": shuf}
    if check_sources:
        val_hash = io.manifest_hash(Path(val[0]))
        for name in ("rm", "aff", "shuf"):
            _check_probe_source(Path(dirs[name][0]), val_hash, name)

    ious: dict[str, float] = {}
    counts: dict[str, int] = {}
    for name, (gt_dir, pred_dir) in dirs.items():
        ious[name], counts[name] = evaluate_set(gt_dir, pred_dir)
    if len(set(counts.values())) != 1:
        raise MetricError(f"probe sets differ in size: {counts}")

    report = sbi(ProbeScores(iou_val=ious["val"], iou_rm=ious["rm"],
                             iou_aff=ious["aff"], iou_shuf=ious["shuf"]))
    return {
        "iou": {k: ious[k] for k in PROBE_SETS},
        **report.to_json(),
        "n_images": counts["val"],
        "source_manifests": [io.manifest_hash(Path(dirs[k][0])) for k in PROBE_SETS],
    }
