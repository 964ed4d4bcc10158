"""End-to-end experiment runs: build site data, train one arm, evaluate, persist.

A :class:`RunRecord` is the only artifact a run produces. Its JSON form is
byte-stable for a fixed config and seed except for ``wall_clock_seconds``.
Non-finite metric values are stored as ``null``.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..data.dataset import MultilabelDataset
from ..data.io import load_dataset
from ..data.split import split_train_test
from ..data.synthetic import generate_synthetic
from ..evaluation.bootstrap import ScoreSet
from ..evaluation.report import MetricsReport, macro_report
from ..federated.config import SiteSpec
from ..federated.orchestrate import FederationResult, run_federated, run_local
from ..federated.site import SiteState, predict_proba
from ..federated.tcp import run_federated_tcp
from ..nn.layers import Parameters
from .config import ConfigError, ExperimentConfig

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass(frozen=True)
class PreparedSite:
    site_id: str
    train: MultilabelDataset
    test: MultilabelDataset
    seed: Optional[int] = None


def prepare_sites(cfg: ExperimentConfig) -> List[PreparedSite]:
    """Materialize every site's train and test split, in config order.

    Synthetic sites are generated together from ``cfg.seed`` so that they share
    the latent patterns; each site's draw does not depend on other sites' sizes.
    """
    generated: Dict[str, MultilabelDataset] = {}
    latent = cfg.latent_config()
    if latent is not None:
        syn = [s for s in cfg.sites if s.synthetic]
        for s, ds in zip(syn, generate_synthetic(latent, [s.n for s in syn], cfg.seed)):
            generated[s.site_id] = ds
    out = []
    for s in cfg.sites:
        if s.synthetic:
            full, test = generated[s.site_id], None
        else:
            full = load_dataset(s.dataset)
            test = load_dataset(s.test_dataset) if s.test_dataset is not None else None
        if test is None:
            train, test = split_train_test(full, cfg.split.test_fraction, cfg.seed)
        else:
            train = full
            if test.label_names != train.label_names:
                raise ConfigError(f"site {s.site_id}: test labels {test.label_names} != {train.label_names}")
        out.append(PreparedSite(s.site_id, train, test, s.seed))
    shapes = {p.train.features.shape[1:] for p in out} | {p.test.features.shape[1:] for p in out}
    if len(shapes) != 1:
        raise ConfigError(f"sites disagree on sample shape: {sorted(shapes)}")
    return out


def sample_shape(sites: Sequence[PreparedSite]) -> Tuple[int, ...]:
    return tuple(sites[0].train.features.shape[1:])


def site_specs(cfg: ExperimentConfig, sites: Sequence[PreparedSite]) -> List[SiteSpec]:
    backbone = cfg.backbone_spec(sample_shape(sites))
    return [SiteSpec(p.site_id, backbone, p.train, seed=p.seed) for p in sites]


def params_digest(params: Parameters) -> str:
    h = hashlib.sha256()
    for k in sorted(params):
        v = np.ascontiguousarray(params[k], dtype="<f8")
        h.update(k.encode() + b"\0" + repr(v.shape).encode() + v.tobytes())
    return h.hexdigest()


def jsonable(x):
    """JSON-safe copy: non-finite floats become None, tuples become lists."""
    if isinstance(x, float):
        return x if math.isfinite(x) else None
    if isinstance(x, dict):
        return {k: jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return jsonable(x.item())
    return x


def _nan(x):
    if x is None:
        return math.nan
    if isinstance(x, dict):
        return {k: _nan(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_nan(v) for v in x]
    return x


@dataclass
class SiteRecord:
    report: MetricsReport
    test_set_hash: str
    n_train: int
    n_test: int
    label_names: Tuple[str, ...]
    test_scores: np.ndarray
    test_labels: np.ndarray
    model_digest: str

    def score_set(self) -> ScoreSet:
        return ScoreSet(self.test_scores, self.test_labels, self.label_names)

    def to_dict(self):
        return {
            "report": self.report.to_dict(),
            "test_set_hash": self.test_set_hash,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "label_names": list(self.label_names),
            "test_scores": self.test_scores.tolist(),
            "test_labels": self.test_labels.astype(int).tolist(),
            "model_digest": self.model_digest,
        }

    @classmethod
    def from_dict(cls, d) -> "SiteRecord":
        rep = _nan(d["report"])
        if rep.get("p_value_vs_baseline") is not None and math.isnan(rep["p_value_vs_baseline"]):
            rep["p_value_vs_baseline"] = None
        n_labels = len(d["label_names"])
        return cls(
            report=MetricsReport.from_dict(rep),
            test_set_hash=d["test_set_hash"],
            n_train=d["n_train"],
            n_test=d["n_test"],
            label_names=tuple(d["label_names"]),
            test_scores=np.asarray(d["test_scores"], dtype=np.float64).reshape(-1, n_labels),
            test_labels=np.asarray(d["test_labels"], dtype=np.int8).reshape(-1, n_labels),
            model_digest=d["model_digest"],
        )


@dataclass
class RunRecord:
    config_hash: str
    config: dict
    seed: int
    mode: str
    transport: str
    sites: Dict[str, SiteRecord]
    history: dict
    wall_clock_seconds: float = 0.0
    format_version: int = FORMAT_VERSION

    def to_dict(self, include_wall_clock: bool = True):
        d = {
            "format_version": self.format_version,
            "config_hash": self.config_hash,
            "config": self.config,
            "seed": self.seed,
            "mode": self.mode,
            "transport": self.transport,
            "sites": {k: self.sites[k].to_dict() for k in sorted(self.sites)},
            "history": self.history,
        }
        if include_wall_clock:
            d["wall_clock_seconds"] = self.wall_clock_seconds
        return jsonable(d)

    def to_json(self, include_wall_clock: bool = True) -> str:
        return json.dumps(self.to_dict(include_wall_clock), indent=1, sort_keys=True, allow_nan=False)

    @classmethod
    def from_dict(cls, d) -> "RunRecord":
        if d.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported run record format {d.get('format_version')!r}")
        return cls(
            config_hash=d["config_hash"],
            config=d["config"],
            seed=d["seed"],
            mode=d["mode"],
            transport=d["transport"],
            sites={k: SiteRecord.from_dict(v) for k, v in d["sites"].items()},
            history=_nan(d["history"]),
            wall_clock_seconds=d.get("wall_clock_seconds") or 0.0,
        )

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json() + "\n")
        return path

    @classmethod
    def load(cls, path) -> "RunRecord":
        return cls.from_dict(json.loads(Path(path).read_text()))


def evaluate_site(state: SiteState, test: MultilabelDataset, cfg: ExperimentConfig) -> SiteRecord:
    scores = predict_proba(state, test.features)
    s = ScoreSet(scores, test.labels, test.label_names)
    return SiteRecord(
        report=macro_report(s, B=cfg.eval.bootstrap, seed=cfg.eval.seed),
        test_set_hash=test.content_hash(),
        n_train=state.n_train,
        n_test=len(test),
        label_names=tuple(test.label_names),
        test_scores=scores,
        test_labels=test.labels.copy(),
        model_digest=params_digest(state.full_params()),
    )


def train_arm(cfg: ExperimentConfig, specs: Sequence[SiteSpec]) -> FederationResult:
    fc = cfg.federation_config()
    if cfg.mode == "local":
        return run_local(fc, specs)
    if cfg.transport == "tcp":
        return run_federated_tcp(fc, specs)
    return run_federated(fc, specs)


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> RunRecord:
    """Run the configured arm end to end; writes ``run.json`` when an output directory is set."""
    t0 = time.perf_counter()
    sites = prepare_sites(cfg)
    specs = site_specs(cfg, sites)
    for p in sites:
        log.info("site %s: %d train / %d test records, labels %s", p.site_id, len(p.train), len(p.test), p.train.label_names)
    result = train_arm(cfg, specs)
    records = {p.site_id: evaluate_site(result.sites[p.site_id], p.test, cfg) for p in sites}
    rec = RunRecord(
        config_hash=cfg.config_hash(),
        config=json.loads(cfg.to_json()),
        seed=cfg.seed,
        mode=cfg.mode,
        transport=cfg.transport,
        sites=records,
        history=result.history(),
        wall_clock_seconds=time.perf_counter() - t0,
    )
    out_dir = out_dir if out_dir is not None else cfg.output_dir
    if out_dir is not None:
        rec.save(Path(out_dir) / "run.json")
    return rec
