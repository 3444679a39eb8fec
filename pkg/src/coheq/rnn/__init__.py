"""Bidirectional recurrent equalizers: cells, model, training."""

from .model import RnnEqualizer, gate_count
from .training import (
    AdamState,
    TrainConfig,
    adam_step,
    bce_loss,
    infer_ber,
    train,
    window_offsets,
)

__all__ = [
    "AdamState",
    "RnnEqualizer",
    "TrainConfig",
    "adam_step",
    "bce_loss",
    "gate_count",
    "infer_ber",
    "train",
    "window_offsets",
]
