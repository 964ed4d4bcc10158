"""Backbone/head partitioning of model parameters.

Parameter keys are ``"<layer>.<kind>"``; partitioning works on layer names, so
a head layer's weight and bias always travel together.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Tuple

from .nn.layers import Dense, InvalidSpecError, ModelSpec, Parameters, layer_of

HEAD_LAYER = "head"


@dataclass(frozen=True)
class HeadSpec:
    feature_dim: int
    label_names: Tuple[str, ...]

    def __post_init__(self):
        names = tuple(self.label_names)
        object.__setattr__(self, "label_names", names)
        if self.feature_dim <= 0:
            raise ValueError("feature_dim must be positive")
        if not names or any(not n for n in names):
            raise ValueError("head needs at least one non-empty label name")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate label names in {names}")

    @property
    def n_labels(self) -> int:
        return len(self.label_names)


@dataclass
class PartitionedParams:
    backbone: Parameters
    head: Parameters

    def __post_init__(self):
        overlap = set(self.backbone) & set(self.head)
        if overlap:
            raise ValueError(f"backbone and head share keys: {sorted(overlap)}")


def split(params: Parameters, head_layer_names: Iterable[str]) -> PartitionedParams:
    head_layer_names = set(head_layer_names)
    layers = {layer_of(k) for k in params}
    unknown = head_layer_names - layers
    if unknown:
        raise KeyError(f"unknown head layers: {sorted(unknown)}")
    backbone = {k: v for k, v in params.items() if layer_of(k) not in head_layer_names}
    head = {k: v for k, v in params.items() if layer_of(k) in head_layer_names}
    return PartitionedParams(backbone, head)


def merge(p: PartitionedParams) -> Parameters:
    overlap = set(p.backbone) & set(p.head)
    if overlap:
        raise ValueError(f"backbone and head share keys: {sorted(overlap)}")
    merged = dict(p.backbone)
    merged.update(p.head)
    return merged


def build_site_model(backbone_spec: ModelSpec, head: HeadSpec) -> ModelSpec:
    """Append the site's linear classification layer (named ``"head"``) to the backbone."""
    out = backbone_spec.output_shape
    if out != (head.feature_dim,):
        raise InvalidSpecError(
            f"backbone output {out} does not match head feature_dim {head.feature_dim}"
        )
    if HEAD_LAYER in backbone_spec.layer_names():
        raise InvalidSpecError(f"backbone already has a layer named {HEAD_LAYER!r}")
    return ModelSpec(
        backbone_spec.input_shape,
        backbone_spec.layers + (Dense(HEAD_LAYER, head.feature_dim, head.n_labels),),
    )
