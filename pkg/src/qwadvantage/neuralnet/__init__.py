"""From-scratch numpy classifiers for adjacency matrices."""

from .metrics import Confusion, confusion
from .models import ARCHS, Network, ShapeError, build_model, cross_entropy, load_model, save_model, softmax
from .training import (
    DivergenceError,
    EvalReport,
    TrainConfig,
    evaluate,
    generalization_sweep,
    gradient_check,
    repeat_training,
    summarize,
    train,
)

__all__ = [
    "ARCHS",
    "Confusion",
    "DivergenceError",
    "EvalReport",
    "Network",
    "ShapeError",
    "TrainConfig",
    "build_model",
    "confusion",
    "cross_entropy",
    "evaluate",
    "generalization_sweep",
    "gradient_check",
    "load_model",
    "repeat_training",
    "save_model",
    "softmax",
    "summarize",
    "train",
]
