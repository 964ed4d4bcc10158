"""Per-label weighted binary cross-entropy on logits."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import NonFiniteError


@dataclass(frozen=True)
class LossConfig:
    """Positive-class weight per label; the loss is averaged over batch and labels."""

    pos_weights: tuple

    def __post_init__(self):
        w = tuple(float(v) for v in np.atleast_1d(np.asarray(self.pos_weights, dtype=float)))
        if not w:
            raise ValueError("pos_weights must not be empty")
        if not all(np.isfinite(v) and v > 0 for v in w):
            raise ValueError(f"pos_weights must be finite and positive, got {w}")
        object.__setattr__(self, "pos_weights", w)

    @classmethod
    def uniform(cls, n_labels: int) -> "LossConfig":
        return cls((1.0,) * n_labels)

    def __len__(self):
        return len(self.pos_weights)


def _softplus(z):
    return np.logaddexp(0.0, z)


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def weighted_bce(logits: np.ndarray, labels: np.ndarray, cfg: LossConfig):
    """Return ``(loss, dloss/dlogits)``.

    ``-log sigmoid(z) = softplus(-z)`` and ``-log(1 - sigmoid(z)) = softplus(z)``
    keep large-magnitude logits finite.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if labels.shape != logits.shape:
        raise ValueError(f"labels shape {labels.shape} != logits shape {logits.shape}")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be 0 or 1")
    if logits.shape[1] != len(cfg):
        raise ValueError(f"{len(cfg)} loss weights for {logits.shape[1]} labels")
    if not np.all(np.isfinite(logits)):
        raise NonFiniteError("non-finite logits")
    y = labels.astype(np.float64)
    w = np.asarray(cfg.pos_weights)[None, :]
    per = w * y * _softplus(-logits) + (1.0 - y) * _softplus(logits)
    count = per.size
    loss = float(per.sum() / count)
    p = sigmoid(logits)
    dlogits = (-w * y * (1.0 - p) + (1.0 - y) * p) / count
    return loss, dlogits
