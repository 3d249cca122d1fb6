"""Stacked recurrent periodicity classifier."""

from .model import (DESK_LAYER_SIZES, PAPER_LAYER_SIZES, LayerParams,
                    ModelParams, PeriodicityModel, RnnConfig, init_params,
                    sequence_loss_grads, stack_backward, stack_forward)
from .training import Adam, train

__all__ = [
    "DESK_LAYER_SIZES",
    "PAPER_LAYER_SIZES",
    "LayerParams",
    "ModelParams",
    "PeriodicityModel",
    "RnnConfig",
    "init_params",
    "sequence_loss_grads",
    "stack_forward",
    "stack_backward",
    "Adam",
    "train",
]
