"""Strict JSON experiment configuration.

A minimal config only lists the sites; everything else has defaults::

    {
      "sites": [
        {"site_id": "A", "n": 200, "labels": [{"name": "d1", "formula": "z1"}]},
        {"site_id": "B", "dataset": "data/site_b"}
      ]
    }

A site is either synthetic (``n`` records labeled by ``labels`` formulas over
the shared latent diseases in ``synthetic``) or loaded from a directory written
by :func:`ffl.data.save_dataset`. Relative dataset paths resolve against the
config file's directory. Unknown keys are rejected at every level.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Annotated, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..data.synthetic import LabelDef, LatentDiseaseConfig, SiteLabels, compile_formula
from ..federated.config import FederationConfig
from ..nn.layers import Conv2D, Dense, Flatten, MaxPool2D, ModelSpec, ReLU

PositiveInt = Annotated[int, Field(gt=0)]
NonNegInt = Annotated[int, Field(ge=0)]
PositiveFloat = Annotated[float, Field(gt=0)]


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True, frozen=True)


class DenseLayer(_Strict):
    type: Literal["dense"]
    out: PositiveInt


class Conv2DLayer(_Strict):
    type: Literal["conv2d"]
    out_channels: PositiveInt
    kernel: PositiveInt
    stride: PositiveInt = 1


class ReluLayer(_Strict):
    type: Literal["relu"]


class MaxPoolLayer(_Strict):
    type: Literal["maxpool"]
    kernel: PositiveInt = 2


class FlattenLayer(_Strict):
    type: Literal["flatten"]


Layer = Annotated[
    Union[DenseLayer, Conv2DLayer, ReluLayer, MaxPoolLayer, FlattenLayer], Field(discriminator="type")
]


def _default_layers():
    return [
        DenseLayer(type="dense", out=32),
        ReluLayer(type="relu"),
        DenseLayer(type="dense", out=32),
        ReluLayer(type="relu"),
    ]


class FederationSection(_Strict):
    rounds: PositiveInt = 200
    local_epochs_per_round: PositiveInt = 1
    batch_size: PositiveInt = 16
    backbone_lr: PositiveFloat = 5e-5
    head_lr: PositiveFloat = 9e-5
    fine_tune_epochs: NonNegInt = 20
    aggregation: Literal["unweighted_mean", "sample_weighted_mean"] = "unweighted_mean"
    sync_every_batches: Optional[PositiveInt] = None
    augment: bool = False
    early_switch_patience: Optional[PositiveInt] = None
    early_switch_min_delta: Annotated[float, Field(ge=0)] = 1e-4


class SyntheticSection(_Strict):
    prevalence: List[Annotated[float, Field(gt=0, lt=1)]] = Field(default_factory=lambda: [0.3] * 4, min_length=1)
    feature_dim: Optional[PositiveInt] = 32
    image_size: Optional[Tuple[PositiveInt, PositiveInt]] = None
    noise_std: Annotated[float, Field(ge=0)] = 0.5
    pattern_scale: PositiveFloat = 1.0
    records_per_patient: PositiveInt = 1

    @model_validator(mode="after")
    def _one_shape(self):
        if self.image_size is not None and "feature_dim" not in self.model_fields_set:
            object.__setattr__(self, "feature_dim", None)
        if (self.feature_dim is None) == (self.image_size is None):
            raise ValueError("set exactly one of feature_dim and image_size")
        return self


class LabelSection(_Strict):
    name: Annotated[str, Field(min_length=1)]
    formula: Annotated[str, Field(min_length=1)]
    flip_noise: Annotated[float, Field(ge=0, lt=0.5)] = 0.0


class SiteSection(_Strict):
    site_id: Annotated[str, Field(min_length=1)]
    n: Optional[PositiveInt] = None
    labels: Optional[List[LabelSection]] = None
    dataset: Optional[str] = None
    test_dataset: Optional[str] = None
    seed: Optional[NonNegInt] = None

    @model_validator(mode="after")
    def _source(self):
        if self.dataset is None:
            if self.n is None or not self.labels:
                raise ValueError("a synthetic site needs 'n' and 'labels' (or give 'dataset')")
            if self.test_dataset is not None:
                raise ValueError("'test_dataset' needs 'dataset'")
            names = [lab.name for lab in self.labels]
            if len(set(names)) != len(names):
                raise ValueError(f"duplicate label names {names}")
        elif self.n is not None or self.labels is not None:
            raise ValueError("'n' and 'labels' only apply to synthetic sites")
        return self

    @property
    def synthetic(self) -> bool:
        return self.dataset is None


class SplitSection(_Strict):
    test_fraction: Annotated[float, Field(gt=0, lt=1)] = 0.25


class EvalSection(_Strict):
    bootstrap: PositiveInt = 1000
    seed: NonNegInt = 0


class ExperimentConfig(_Strict):
    mode: Literal["local", "federated"] = "federated"
    transport: Literal["inproc", "tcp"] = "inproc"
    seed: NonNegInt = 0
    federation: FederationSection = FederationSection()
    backbone: List[Layer] = Field(default_factory=_default_layers)
    synthetic: SyntheticSection = SyntheticSection()
    sites: List[SiteSection] = Field(min_length=1)
    split: SplitSection = SplitSection()
    eval: EvalSection = EvalSection()
    output_dir: Optional[str] = None

    @model_validator(mode="after")
    def _check(self):
        ids = [s.site_id for s in self.sites]
        if len(set(ids)) != len(ids):
            raise ValueError(f"site ids must be unique, got {ids}")
        k = len(self.synthetic.prevalence)
        for s in self.sites:
            for lab in s.labels or ():
                try:
                    compile_formula(lab.formula, k)
                except ValueError as exc:
                    raise ValueError(f"site {s.site_id}, label {lab.name}: {exc}") from None
        return self

    # --- derived objects -----------------------------------------------------------------

    def federation_config(self) -> FederationConfig:
        return FederationConfig(seed=self.seed, **self.federation.model_dump())

    def latent_config(self) -> Optional[LatentDiseaseConfig]:
        syn = [s for s in self.sites if s.synthetic]
        if not syn:
            return None
        sites = tuple(
            SiteLabels(s.site_id, tuple(LabelDef(lab.name, lab.formula, lab.flip_noise) for lab in s.labels))
            for s in syn
        )
        d = self.synthetic.model_dump()
        return LatentDiseaseConfig(sites=sites, **d)

    def backbone_spec(self, sample_shape: Tuple[int, ...]) -> ModelSpec:
        """Build the backbone for inputs of ``sample_shape`` (vector or ``H x W`` image)."""
        input_shape = tuple(sample_shape) if len(sample_shape) == 1 else (1,) + tuple(sample_shape)
        layers = []
        shape = input_shape
        counts = {"dense": 0, "conv2d": 0, "maxpool": 0}
        for lay in self.backbone:
            if lay.type in counts:
                counts[lay.type] += 1
            if lay.type == "dense":
                if len(shape) != 1:
                    raise ConfigError(f"backbone: dense layer needs a flat input, got shape {shape}")
                layers.append(Dense(f"fc{counts['dense']}", shape[0], lay.out))
            elif lay.type == "conv2d":
                if len(shape) != 3:
                    raise ConfigError(f"backbone: conv2d layer needs an image input, got shape {shape}")
                layers.append(Conv2D(f"conv{counts['conv2d']}", shape[0], lay.out_channels, lay.kernel, lay.stride))
            elif lay.type == "relu":
                layers.append(ReLU())
            elif lay.type == "maxpool":
                layers.append(MaxPool2D(lay.kernel))
            else:
                layers.append(Flatten())
            try:
                shape = ModelSpec(input_shape, list(layers)).output_shape
            except ValueError as exc:
                raise ConfigError(f"backbone: {exc}") from None
        spec = ModelSpec(input_shape, layers)
        if len(spec.output_shape) != 1:
            raise ConfigError(f"backbone must end in a flat feature vector, got shape {spec.output_shape}")
        return spec

    # --- serialization -------------------------------------------------------------------

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True)

    def config_hash(self) -> str:
        """SHA-256 of the canonical config; key order and ``output_dir`` do not matter."""
        d = self.model_dump(mode="json", exclude={"output_dir"})
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def format_validation_error(exc: ValidationError) -> str:
    lines = []
    for e in exc.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{path}: {e['msg']}")
    return "; ".join(lines)


def parse_config_text(text: str) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate_json(text)
    except ValidationError as exc:
        raise ConfigError(format_validation_error(exc)) from None


def parse_config(path) -> ExperimentConfig:
    """Read and validate a config file; dataset paths become absolute."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    cfg = parse_config_text(text)
    return resolve_paths(cfg, path.parent)


def resolve_paths(cfg: ExperimentConfig, base: Path) -> ExperimentConfig:
    sites = []
    for s in cfg.sites:
        upd = {}
        for key in ("dataset", "test_dataset"):
            v = getattr(s, key)
            if v is not None:
                p = Path(v)
                p = p if p.is_absolute() else (base / p)
                if not p.is_dir():
                    raise ConfigError(f"sites.{s.site_id}.{key}: no such directory {p}")
                upd[key] = str(p.resolve())
        sites.append(s.model_copy(update=upd))
    return cfg.model_copy(update={"sites": sites})


def default_experiment_config(**overrides) -> ExperimentConfig:
    """The two-site synthetic experiment: small site A and large site B."""
    d = {
        "sites": [
            {
                "site_id": "A",
                "n": 200,
                "labels": [{"name": "d1", "formula": "z1"}, {"name": "d2", "formula": "z2"}],
            },
            {
                "site_id": "B",
                "n": 5000,
                "labels": [
                    {"name": "d1_or_d3", "formula": "z1 | z3", "flip_noise": 0.05},
                    {"name": "d2", "formula": "z2"},
                    {"name": "d4", "formula": "z4"},
                ],
            },
        ]
    }
    d.update(overrides)
    return parse_config_text(json.dumps(d))
