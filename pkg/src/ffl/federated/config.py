from __future__ import annotations

import enum
import zlib
from dataclasses import dataclass
from typing import Optional

from ..data.dataset import MultilabelDataset
from ..nn.layers import ModelSpec
from ..nn.loss import LossConfig


class Aggregation(str, enum.Enum):
    UNWEIGHTED_MEAN = "unweighted_mean"
    SAMPLE_WEIGHTED_MEAN = "sample_weighted_mean"


@dataclass(frozen=True)
class FederationConfig:
    """Round schedule and optimizer settings shared by every site.

    A round is ``local_epochs_per_round`` epochs unless ``sync_every_batches``
    is set, in which case a round is that many mini-batches. With
    ``early_switch_patience`` set, the federated phase ends early once the mean
    site training loss has not improved by ``early_switch_min_delta`` for that
    many rounds.
    """

    rounds: int = 1
    local_epochs_per_round: int = 1
    batch_size: int = 16
    backbone_lr: float = 5e-5
    head_lr: float = 9e-5
    fine_tune_epochs: int = 0
    seed: int = 0
    aggregation: Aggregation = Aggregation.UNWEIGHTED_MEAN
    sync_every_batches: Optional[int] = None
    augment: bool = False
    early_switch_patience: Optional[int] = None
    early_switch_min_delta: float = 1e-4

    def __post_init__(self):
        object.__setattr__(self, "aggregation", Aggregation(self.aggregation))
        for name in ("rounds", "local_epochs_per_round", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.fine_tune_epochs < 0:
            raise ValueError("fine_tune_epochs must be >= 0")
        if not (self.backbone_lr > 0 and self.head_lr > 0):
            raise ValueError("learning rates must be positive")
        if self.sync_every_batches is not None and self.sync_every_batches < 1:
            raise ValueError("sync_every_batches must be positive")
        if self.early_switch_patience is not None and self.early_switch_patience < 1:
            raise ValueError("early_switch_patience must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True)
class SiteSpec:
    """One participating site: its training data and the shared backbone architecture.

    ``seed`` selects the site's private random stream (shuffling, augmentation);
    by default it is derived from ``site_id``.
    """

    site_id: str
    backbone: ModelSpec
    train: MultilabelDataset
    loss: Optional[LossConfig] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if not self.site_id:
            raise ValueError("site_id must be non-empty")
        if len(self.train) == 0:
            raise ValueError(f"site {self.site_id}: empty training set")
        if self.loss is not None and len(self.loss) != self.train.n_labels:
            raise ValueError(f"site {self.site_id}: loss weights do not match label count")

    @property
    def stream_seed(self) -> int:
        return zlib.crc32(self.site_id.encode()) if self.seed is None else int(self.seed)
