"""Training and inference harness over the shapeprobe exchange formats."""

from .models import ARCHITECTURES, make_model
from .predict import load_checkpoint, predict_dataset, predict_sets
from .spec import OPTIMIZER_PRESETS, TrainSpec
from .train import train

__all__ = [
    "ARCHITECTURES",
    "OPTIMIZER_PRESETS",
    "TrainSpec",
    "load_checkpoint",
    "make_model",
    "predict_dataset",
    "predict_sets",
    "train",
]
