"""Small numpy neural-network engine: layers, exact gradients, weighted BCE, Adam."""
from .layers import (
    Conv2D,
    Dense,
    Flatten,
    InvalidSpecError,
    MaxPool2D,
    ModelSpec,
    NonFiniteError,
    Parameters,
    ReLU,
    init_params,
    layer_of,
    n_params,
)
from .loss import LossConfig, sigmoid, weighted_bce
from .model import forward, loss_and_grads
from .optim import AdamState, adam_step

__all__ = [
    "AdamState",
    "Conv2D",
    "Dense",
    "Flatten",
    "InvalidSpecError",
    "LossConfig",
    "MaxPool2D",
    "ModelSpec",
    "NonFiniteError",
    "Parameters",
    "ReLU",
    "adam_step",
    "forward",
    "init_params",
    "layer_of",
    "loss_and_grads",
    "n_params",
    "sigmoid",
    "weighted_bce",
]
