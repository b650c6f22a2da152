"""Training specification, loaded from JSON."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import SpecError
from .models import ARCHITECTURES

OPTIMIZER_PRESETS = ("adam_default", "sgd_sweep")

_REQUIRED = ("train_dir", "val_dir", "arch", "out_dir")
_OPTIONAL = {"optimizer": "adam_default", "epochs": 30, "batch_size": 16,
             "seed": 0, "patience": 10, "augmentation": None, "predict": {}}


@dataclass(frozen=True)
class TrainSpec:
    train_dir: str
    val_dir: str
    arch: str
    out_dir: str
    optimizer: str = "adam_default"
    epochs: int = 30
    batch_size: int = 16
    seed: int = 0
    patience: int = 10
    augmentation: dict[str, Any] | None = None
    predict: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise SpecError(f"arch must be one of {ARCHITECTURES}, "
                            f"not {self.arch!r}")
        if self.optimizer not in OPTIMIZER_PRESETS:
            raise SpecError(f"optimizer must be one of {OPTIMIZER_PRESETS}, "
                            f"not {self.optimizer!r}")
        if self.epochs < 0:
            raise SpecError("epochs must be >= 0")
        if self.batch_size < 1:
            raise SpecError("batch_size must be >= 1")
        if self.patience < 1:
            raise SpecError("patience must be >= 1")
        if self.augmentation is not None and "kind" not in self.augmentation:
            raise SpecError("augmentation block needs a 'kind'")
        if not isinstance(self.predict, dict):
            raise SpecError("predict must map names to dataset directories")

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "TrainSpec":
        if not isinstance(obj, dict):
            raise SpecError("train spec must be a JSON object")
        missing = [k for k in _REQUIRED if k not in obj]
        if missing:
            raise SpecError(f"train spec lacks {missing}")
        unknown = set(obj) - set(_REQUIRED) - set(_OPTIONAL)
        if unknown:
            raise SpecError(f"unknown train spec keys: {sorted(unknown)}")
        kwargs = {**_OPTIONAL, **obj}
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "TrainSpec":
        try:
            with open(path) as fh:
                obj = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise SpecError(f"cannot load train spec {path}: {e}") from e
        return cls.from_json(obj)

    def to_json(self) -> dict[str, Any]:
        return {
            "train_dir": self.train_dir, "val_dir": self.val_dir,
            "arch": self.arch, "out_dir": self.out_dir,
            "optimizer": self.optimizer, "epochs": self.epochs,
            "batch_size": self.batch_size, "seed": self.seed,
            "patience": self.patience, "augmentation": self.augmentation,
            "predict": dict(self.predict),
        }
