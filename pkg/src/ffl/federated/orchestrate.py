"""Round-based orchestration of federated and local-only training."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..nn.layers import InvalidSpecError, ModelSpec, Parameters, init_params
from .aggregate import aggregate
from .config import FederationConfig, SiteSpec
from .site import SiteState, SiteWorker, fine_tune, init_site, round_steps, train_steps
from .wire import EnterFineTune, GlobalBackbone, LocalBackbone, Shutdown

log = logging.getLogger(__name__)


@dataclass
class RoundRecord:
    round: int
    losses: Dict[str, float]

    @property
    def mean_loss(self) -> float:
        return float(np.mean(list(self.losses.values())))

    def to_dict(self):
        return {"round": self.round, "losses": dict(self.losses), "mean_loss": self.mean_loss}


@dataclass
class FederationResult:
    backbone: Optional[Parameters]
    sites: Dict[str, SiteState]
    rounds: List[RoundRecord] = field(default_factory=list)
    fine_tune_losses: Dict[str, List[float]] = field(default_factory=dict)
    rounds_completed: int = 0

    @property
    def heads(self) -> Dict[str, Parameters]:
        return {sid: s.params.head for sid, s in self.sites.items()}

    def history(self):
        return {
            "rounds": [r.to_dict() for r in self.rounds],
            "rounds_completed": self.rounds_completed,
            "fine_tune": {k: list(v) for k, v in self.fine_tune_losses.items()},
        }


class Aggregator:
    """Transport-independent aggregator state: the global backbone and the round schedule."""

    def __init__(self, cfg: FederationConfig, backbone: ModelSpec, site_ids: Sequence[str]):
        if not site_ids:
            raise ValueError("federation needs at least one site")
        if len(set(site_ids)) != len(site_ids):
            raise ValueError(f"site ids must be unique, got {list(site_ids)}")
        self.cfg = cfg
        self.site_ids = sorted(site_ids)
        self.backbone = init_params(backbone, cfg.seed)
        self.records: List[RoundRecord] = []
        self._best = math.inf
        self._stale = 0

    def broadcast(self, round_index: int) -> GlobalBackbone:
        return GlobalBackbone(round_index, {k: v.copy() for k, v in self.backbone.items()})

    def collect(self, round_index: int, replies: Sequence[LocalBackbone]) -> bool:
        """Aggregate one round; returns True when the federated phase should stop."""
        got = sorted(r.site_id for r in replies)
        if got != self.site_ids:
            raise RuntimeError(f"round {round_index}: expected updates from {self.site_ids}, got {got}")
        for r in replies:
            if r.round != round_index:
                raise RuntimeError(f"site {r.site_id} answered round {r.round}, expected {round_index}")
        self.backbone = aggregate([(r.site_id, r.params, r.n_train) for r in replies], self.cfg.aggregation)
        rec = RoundRecord(round_index, {r.site_id: r.train_loss for r in sorted(replies, key=lambda r: r.site_id)})
        self.records.append(rec)
        if round_index + 1 >= self.cfg.rounds:
            return True
        if self.cfg.early_switch_patience is not None:
            if rec.mean_loss < self._best - self.cfg.early_switch_min_delta:
                self._best = rec.mean_loss
                self._stale = 0
            else:
                self._stale += 1
                if self._stale >= self.cfg.early_switch_patience:
                    log.info("mean loss plateaued after round %d; entering fine-tuning", round_index)
                    return True
        return False


def _check_sites(sites: Sequence[SiteSpec]) -> ModelSpec:
    if not sites:
        raise ValueError("need at least one site")
    backbone = sites[0].backbone
    for s in sites[1:]:
        if s.backbone != backbone:
            raise InvalidSpecError(f"site {s.site_id} uses a different backbone than {sites[0].site_id}")
    return backbone


class Observer:
    """Hooks around the aggregation barrier; the default does nothing."""

    def before_aggregate(self, round_index: int, sites: Dict[str, SiteState]) -> None:
        pass

    def after_broadcast(self, round_index: int, sites: Dict[str, SiteState]) -> None:
        pass


def run_federated(
    cfg: FederationConfig, sites: Sequence[SiteSpec], observer: Optional[Observer] = None
) -> FederationResult:
    """Federated phase (broadcast, local round, aggregate) followed by local fine-tuning.

    Sites run sequentially in ascending ``site_id`` order; their results do not
    depend on that order.
    """
    backbone = _check_sites(sites)
    observer = observer or Observer()
    workers = {s.site_id: SiteWorker(s, cfg) for s in sites}
    if len(workers) != len(sites):
        raise ValueError("site ids must be unique")
    agg = Aggregator(cfg, backbone, list(workers))
    order = agg.site_ids

    r = 0
    while True:
        msg = agg.broadcast(r)
        replies = [workers[sid].handle(msg) for sid in order]
        observer.before_aggregate(r, {sid: workers[sid].state for sid in order})
        stop = agg.collect(r, replies)
        result = agg.broadcast(r)
        for sid in order:
            workers[sid].handle(result)
        observer.after_broadcast(r, {sid: workers[sid].state for sid in order})
        if stop:
            break
        r += 1

    for sid in order:
        workers[sid].handle(EnterFineTune())
        workers[sid].handle(Shutdown())
    return FederationResult(
        backbone=agg.backbone,
        sites={sid: workers[sid].state for sid in order},
        rounds=agg.records,
        fine_tune_losses={sid: workers[sid].fine_tune_history for sid in order},
        rounds_completed=r + 1,
    )


def run_local(cfg: FederationConfig, sites: Sequence[SiteSpec]) -> FederationResult:
    """Each site alone on the same schedule as :func:`run_federated`, never aggregating."""
    _check_sites(sites)
    states = {}
    records: Dict[int, Dict[str, float]] = {}
    fine = {}
    for site in sorted(sites, key=lambda s: s.site_id):
        st = init_site(site, cfg)
        for r in range(cfg.rounds):
            loss = train_steps(st, cfg, round_steps(st, cfg))
            st.history.append(loss)
            records.setdefault(r, {})[site.site_id] = loss
        before = len(st.history)
        st = fine_tune(st, cfg.fine_tune_epochs, cfg)
        fine[site.site_id] = st.history[before:]
        states[site.site_id] = st
    return FederationResult(
        backbone=None,
        sites=states,
        rounds=[RoundRecord(r, records[r]) for r in sorted(records)],
        fine_tune_losses=fine,
        rounds_completed=cfg.rounds,
    )
