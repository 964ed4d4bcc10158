from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from ..nn.loss import LossConfig

WEIGHT_MIN = 1e-2
WEIGHT_MAX = 1e2


@dataclass(frozen=True)
class MultilabelDataset:
    """Features (``n x d`` or ``n x H x W``), a ``{0,1}`` label matrix and patient ids."""

    features: np.ndarray
    labels: np.ndarray
    label_names: Tuple[str, ...]
    patient_ids: Tuple[str, ...]

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "label_names", tuple(self.label_names))
        object.__setattr__(self, "patient_ids", tuple(str(p) for p in self.patient_ids))
        if labels.ndim != 2 or labels.shape[1] != len(self.label_names):
            raise ValueError(
                f"labels must be n x {len(self.label_names)}, got shape {labels.shape}"
            )
        if not np.all((labels == 0) | (labels == 1)):
            raise ValueError("labels must be 0 or 1")
        object.__setattr__(self, "labels", labels.astype(np.int8))
        n = labels.shape[0]
        if features.shape[0] != n or len(self.patient_ids) != n:
            raise ValueError(
                f"row counts disagree: features {features.shape[0]}, labels {n}, "
                f"patient ids {len(self.patient_ids)}"
            )
        if any(not p for p in self.patient_ids):
            raise ValueError("patient ids must be non-empty")
        if len(set(self.label_names)) != len(self.label_names):
            raise ValueError("label names must be unique")

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def n_labels(self) -> int:
        return len(self.label_names)

    def subset(self, idx: Sequence[int]) -> "MultilabelDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return MultilabelDataset(
            self.features[idx],
            self.labels[idx],
            self.label_names,
            tuple(self.patient_ids[i] for i in idx),
        )

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(repr(self.features.shape).encode())
        h.update(np.ascontiguousarray(self.features, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.labels, dtype=np.int8).tobytes())
        h.update("\x1f".join(self.label_names).encode())
        h.update("\x1f".join(self.patient_ids).encode())
        return h.hexdigest()


def class_pos_weights(ds: MultilabelDataset) -> LossConfig:
    """Negative/positive count ratio per label, clamped to [0.01, 100]."""
    if len(ds) == 0:
        raise ValueError("cannot compute class weights of an empty dataset")
    pos = ds.labels.sum(axis=0).astype(np.float64)
    neg = len(ds) - pos
    with np.errstate(divide="ignore"):
        w = np.where(pos > 0, neg / np.where(pos > 0, pos, 1.0), WEIGHT_MAX)
    return LossConfig(tuple(np.clip(w, WEIGHT_MIN, WEIGHT_MAX)))
