"""Site-local training: state, one federated round, fine-tuning, and the message handler."""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..data.dataset import MultilabelDataset, class_pos_weights
from ..data.imaging import augment
from ..nn.layers import ModelSpec, NonFiniteError, Parameters, init_params
from ..nn.loss import LossConfig, sigmoid
from ..nn.model import forward, loss_and_grads
from ..nn.optim import AdamState, adam_step
from ..partition import HEAD_LAYER, HeadSpec, PartitionedParams, build_site_model, merge, split
from .config import FederationConfig, SiteSpec
from .wire import EnterFineTune, GlobalBackbone, LocalBackbone, Register, RoundMessage, Shutdown

log = logging.getLogger(__name__)


@dataclass
class SiteState:
    site_id: str
    spec: ModelSpec
    params: PartitionedParams
    adam_backbone: AdamState
    adam_head: AdamState
    data: MultilabelDataset
    loss: LossConfig
    rng: np.random.Generator
    perm: Optional[np.ndarray] = None
    pos: int = 0
    steps: int = 0
    history: List[float] = field(default_factory=list)

    def copy(self) -> "SiteState":
        return SiteState(
            self.site_id,
            self.spec,
            PartitionedParams(
                {k: v.copy() for k, v in self.params.backbone.items()},
                {k: v.copy() for k, v in self.params.head.items()},
            ),
            self.adam_backbone.copy(),
            self.adam_head.copy(),
            self.data,
            self.loss,
            copy.deepcopy(self.rng),
            None if self.perm is None else self.perm.copy(),
            self.pos,
            self.steps,
            list(self.history),
        )

    @property
    def n_train(self) -> int:
        return len(self.data)

    def full_params(self) -> Parameters:
        return merge(self.params)


def init_site(site: SiteSpec, cfg: FederationConfig) -> SiteState:
    """Fresh site model; the backbone initialization depends only on ``cfg.seed``."""
    head = HeadSpec(site.backbone.output_shape[0], site.train.label_names)
    spec = build_site_model(site.backbone, head)
    params = split(init_params(spec, cfg.seed), {HEAD_LAYER})
    loss = site.loss if site.loss is not None else class_pos_weights(site.train)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, site.stream_seed]))
    return SiteState(
        site.site_id,
        spec,
        params,
        AdamState.zeros_like(params.backbone),
        AdamState.zeros_like(params.head),
        site.train,
        loss,
        rng,
    )


def model_inputs(spec: ModelSpec, features: np.ndarray) -> np.ndarray:
    """Reshape ``n x H x W`` images to the model's ``(n, C, H, W)`` input when needed."""
    return features.reshape((features.shape[0],) + spec.input_shape)


def _next_batch(state: SiteState, batch_size: int) -> np.ndarray:
    n = state.n_train
    if state.perm is None or state.pos >= n:
        state.perm = state.rng.permutation(n)
        state.pos = 0
    idx = state.perm[state.pos : state.pos + batch_size]
    state.pos += len(idx)
    return idx


def train_steps(state: SiteState, cfg: FederationConfig, n_steps: int) -> float:
    """Run ``n_steps`` Adam steps in place; returns the mean batch loss (NaN if none)."""
    losses = []
    for _ in range(n_steps):
        idx = _next_batch(state, cfg.batch_size)
        x = state.data.features[idx]
        if cfg.augment and x.ndim == 3:
            x = np.stack([augment(img, state.rng) for img in x])
        x = model_inputs(state.spec, x)
        y = state.data.labels[idx]
        loss, grads = loss_and_grads(state.spec, state.full_params(), x, y, state.loss)
        if not math.isfinite(loss):
            raise NonFiniteError(f"site {state.site_id}: non-finite loss at step {state.steps}")
        g = split(grads, {HEAD_LAYER})
        bb, state.adam_backbone = adam_step(
            state.adam_backbone, state.params.backbone, g.backbone, cfg.backbone_lr
        )
        hd, state.adam_head = adam_step(state.adam_head, state.params.head, g.head, cfg.head_lr)
        state.params = PartitionedParams(bb, hd)
        state.steps += 1
        losses.append(loss)
    return float(np.mean(losses)) if losses else math.nan


def steps_per_epoch(state: SiteState, cfg: FederationConfig) -> int:
    return -(-state.n_train // cfg.batch_size)


def _epoch_steps(state: SiteState, cfg: FederationConfig, epochs: int) -> int:
    return epochs * steps_per_epoch(state, cfg)


def round_steps(state: SiteState, cfg: FederationConfig, epochs: Optional[int] = None) -> int:
    if epochs is None and cfg.sync_every_batches is not None:
        return cfg.sync_every_batches
    return _epoch_steps(state, cfg, cfg.local_epochs_per_round if epochs is None else epochs)


def adopt_backbone(state: SiteState, backbone: Parameters) -> SiteState:
    if set(backbone) != set(state.params.backbone):
        raise ValueError(f"site {state.site_id}: global backbone keys do not match")
    for k, v in backbone.items():
        if v.shape != state.params.backbone[k].shape:
            raise ValueError(f"site {state.site_id}: global backbone shape mismatch for {k}")
    out = state.copy()
    out.params = PartitionedParams({k: backbone[k].copy() for k in state.params.backbone}, out.params.head)
    return out


def site_local_round(
    site: SiteState,
    global_backbone: Parameters,
    cfg: FederationConfig,
    round_index: int = 0,
    epochs: Optional[int] = None,
):
    """Adopt the global backbone, train locally, and report the new backbone.

    Returns ``(LocalBackbone, new_state)``; the input state is left untouched.
    The head is trained alongside but never leaves the site.
    """
    state = adopt_backbone(site, global_backbone)
    loss = train_steps(state, cfg, round_steps(state, cfg, epochs))
    state.history.append(loss)
    msg = LocalBackbone(
        round_index,
        state.site_id,
        {k: v.copy() for k, v in state.params.backbone.items()},
        state.n_train,
        loss,
    )
    return msg, state


def fine_tune(site: SiteState, epochs: int, cfg: FederationConfig) -> SiteState:
    """Local-only epochs updating backbone and head; nothing is sent anywhere."""
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    state = site.copy()
    for _ in range(epochs):
        state.history.append(train_steps(state, cfg, steps_per_epoch(state, cfg)))
    return state


def predict_proba(state: SiteState, features: np.ndarray, batch_size: int = 512) -> np.ndarray:
    params = state.full_params()
    out = []
    for start in range(0, features.shape[0], batch_size):
        x = model_inputs(state.spec, features[start : start + batch_size])
        out.append(sigmoid(forward(state.spec, params, x)))
    return np.concatenate(out) if out else np.zeros((0, state.data.n_labels))


def mean_loss(state: SiteState, ds: Optional[MultilabelDataset] = None) -> float:
    """Full-dataset loss under the site's loss weights (training data by default)."""
    ds = state.data if ds is None else ds
    loss, _ = loss_and_grads(
        state.spec, state.full_params(), model_inputs(state.spec, ds.features), ds.labels, state.loss
    )
    return loss


class SiteWorker:
    """Message-driven site used by both transports.

    ``GlobalBackbone`` for a round the site has not trained yet means adopt and
    train, answering with ``LocalBackbone``. A ``GlobalBackbone`` repeating the
    last trained round carries that round's aggregate: the site adopts it
    without training (this is how the final backbone arrives before
    ``EnterFineTune``).
    """

    def __init__(self, site: SiteSpec, cfg: FederationConfig):
        self.cfg = cfg
        self.state = init_site(site, cfg)
        self.last_round = -1
        self.finished = False
        self.fine_tune_history: List[float] = []

    def register(self) -> Register:
        return Register(self.state.site_id, self.state.n_train)

    def handle(self, msg: RoundMessage) -> Optional[RoundMessage]:
        if isinstance(msg, GlobalBackbone):
            if msg.round > self.last_round:
                reply, self.state = site_local_round(self.state, msg.params, self.cfg, msg.round)
                self.last_round = msg.round
                return reply
            if msg.round == self.last_round:
                self.state = adopt_backbone(self.state, msg.params)
                return None
            raise ValueError(f"site {self.state.site_id}: round went backwards to {msg.round}")
        if isinstance(msg, EnterFineTune):
            before = len(self.state.history)
            self.state = fine_tune(self.state, self.cfg.fine_tune_epochs, self.cfg)
            self.fine_tune_history = self.state.history[before:]
            return None
        if isinstance(msg, Shutdown):
            self.finished = True
            return None
        raise ValueError(f"site {self.state.site_id}: unexpected message {type(msg).__name__}")
