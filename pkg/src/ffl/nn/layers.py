"""Layer specifications, model specs and parameter initialization."""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Dict, Tuple, Union

import numpy as np

Parameters = Dict[str, np.ndarray]


class InvalidSpecError(ValueError):
    """Raised when a model spec does not describe a valid network."""


class NonFiniteError(FloatingPointError):
    """Raised when NaN or Inf shows up in a forward pass, loss or gradient."""


@dataclass(frozen=True)
class Dense:
    name: str
    in_features: int
    out_features: int


@dataclass(frozen=True)
class Conv2D:
    name: str
    in_channels: int
    out_channels: int
    kernel: int
    stride: int = 1


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class MaxPool2D:
    kernel: int


@dataclass(frozen=True)
class Flatten:
    pass


LayerSpec = Union[Dense, Conv2D, ReLU, MaxPool2D, Flatten]
PARAM_LAYERS = (Dense, Conv2D)


def param_key(layer_name: str, kind: str) -> str:
    return f"{layer_name}.{kind}"


def layer_of(key: str) -> str:
    """Layer name that owns parameter ``key`` (``"fc1.weight"`` -> ``"fc1"``)."""
    return key.rsplit(".", 1)[0]


@dataclass(frozen=True)
class ModelSpec:
    """An ordered stack of layers applied to inputs of ``input_shape``.

    ``input_shape`` excludes the batch axis: ``(d,)`` for vectors,
    ``(channels, height, width)`` for images.
    """

    input_shape: Tuple[int, ...]
    layers: Tuple[LayerSpec, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        self.shapes()

    def shapes(self) -> list:
        """Per-sample activation shapes, input first. Validates the stack."""
        if not self.input_shape or any(d <= 0 for d in self.input_shape):
            raise InvalidSpecError(f"input shape must have positive dims, got {self.input_shape}")
        shape = self.input_shape
        out = [shape]
        seen = set()
        for i, layer in enumerate(self.layers):
            if isinstance(layer, PARAM_LAYERS):
                if not layer.name or "." in layer.name:
                    raise InvalidSpecError(f"layer {i}: invalid name {layer.name!r}")
                if layer.name in seen:
                    raise InvalidSpecError(f"duplicate layer name {layer.name!r}")
                seen.add(layer.name)
            shape = _out_shape(layer, shape, i)
            out.append(shape)
        return out

    @property
    def output_shape(self) -> Tuple[int, ...]:
        return self.shapes()[-1]

    def param_layers(self) -> list:
        return [layer for layer in self.layers if isinstance(layer, PARAM_LAYERS)]

    def layer_names(self) -> list:
        return [layer.name for layer in self.param_layers()]

    def param_shapes(self) -> Dict[str, Tuple[int, ...]]:
        shapes = {}
        for layer in self.param_layers():
            if isinstance(layer, Dense):
                w = (layer.in_features, layer.out_features)
                b = (layer.out_features,)
            else:
                w = (layer.out_channels, layer.in_channels, layer.kernel, layer.kernel)
                b = (layer.out_channels,)
            shapes[param_key(layer.name, "weight")] = w
            shapes[param_key(layer.name, "bias")] = b
        return shapes


def _out_shape(layer, shape, i):
    if isinstance(layer, Dense):
        if layer.in_features <= 0 or layer.out_features <= 0:
            raise InvalidSpecError(f"layer {i}: Dense sizes must be positive")
        if shape != (layer.in_features,):
            raise InvalidSpecError(
                f"layer {i} ({layer.name}): expects input ({layer.in_features},), got {shape}"
            )
        return (layer.out_features,)
    if isinstance(layer, ReLU):
        return shape
    if isinstance(layer, Flatten):
        return (int(np.prod(shape)),)
    if isinstance(layer, Conv2D):
        if min(layer.in_channels, layer.out_channels, layer.kernel, layer.stride) <= 0:
            raise InvalidSpecError(f"layer {i}: Conv2D sizes must be positive")
        if len(shape) != 3 or shape[0] != layer.in_channels:
            raise InvalidSpecError(
                f"layer {i} ({layer.name}): expects ({layer.in_channels}, H, W), got {shape}"
            )
        _, h, w = shape
        if h < layer.kernel or w < layer.kernel:
            raise InvalidSpecError(f"layer {i} ({layer.name}): kernel larger than input {shape}")
        return (
            layer.out_channels,
            (h - layer.kernel) // layer.stride + 1,
            (w - layer.kernel) // layer.stride + 1,
        )
    if isinstance(layer, MaxPool2D):
        if layer.kernel <= 0:
            raise InvalidSpecError(f"layer {i}: pool kernel must be positive")
        if len(shape) != 3 or shape[1] < layer.kernel or shape[2] < layer.kernel:
            raise InvalidSpecError(f"layer {i}: MaxPool2D needs (C, H, W) >= kernel, got {shape}")
        c, h, w = shape
        return (c, h // layer.kernel, w // layer.kernel)
    raise InvalidSpecError(f"layer {i}: unknown layer type {type(layer).__name__}")


def _layer_rng(seed: int, name: str) -> np.random.Generator:
    # Keyed by layer name so a backbone initializes identically whatever head sits on top.
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode())]))


def init_params(spec: ModelSpec, seed: int) -> Parameters:
    """Glorot-uniform weights, zero biases; deterministic in ``seed``."""
    spec.shapes()
    params: Parameters = {}
    for layer in spec.param_layers():
        if isinstance(layer, Dense):
            fan_in, fan_out = layer.in_features, layer.out_features
            wshape = (layer.in_features, layer.out_features)
            nb = layer.out_features
        else:
            k2 = layer.kernel * layer.kernel
            fan_in, fan_out = layer.in_channels * k2, layer.out_channels * k2
            wshape = (layer.out_channels, layer.in_channels, layer.kernel, layer.kernel)
            nb = layer.out_channels
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        rng = _layer_rng(seed, layer.name)
        params[param_key(layer.name, "weight")] = rng.uniform(-bound, bound, size=wshape)
        params[param_key(layer.name, "bias")] = np.zeros(nb)
    return params


def check_params(spec: ModelSpec, params: Parameters) -> None:
    expected = spec.param_shapes()
    if set(expected) != set(params):
        missing = sorted(set(expected) - set(params))
        extra = sorted(set(params) - set(expected))
        raise InvalidSpecError(f"parameter keys mismatch: missing={missing} extra={extra}")
    for key, shape in expected.items():
        if tuple(params[key].shape) != shape:
            raise InvalidSpecError(f"{key}: expected shape {shape}, got {params[key].shape}")


def n_params(params: Parameters) -> int:
    return int(sum(v.size for v in params.values()))
