"""Forward and backward passes over a :class:`ModelSpec`."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

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
    check_params,
    param_key,
)
from .loss import LossConfig, weighted_bce


def _check_batch(spec: ModelSpec, batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != len(spec.input_shape) + 1 or batch.shape[1:] != spec.input_shape:
        raise InvalidSpecError(
            f"batch shape {batch.shape} does not match (N,) + {spec.input_shape}"
        )
    if len(spec.output_shape) != 1:
        raise InvalidSpecError(f"model output must be a vector, got {spec.output_shape}")
    return batch


def _conv_windows(x, k, s):
    # (N, C, H', W', k, k)
    return sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::s, ::s]


def _forward(spec: ModelSpec, params: Parameters, x: np.ndarray):
    caches = []
    for layer in spec.layers:
        if isinstance(layer, Dense):
            caches.append(x)
            x = x @ params[param_key(layer.name, "weight")] + params[param_key(layer.name, "bias")]
        elif isinstance(layer, ReLU):
            caches.append(x > 0)
            x = np.maximum(x, 0.0)
        elif isinstance(layer, Flatten):
            caches.append(x.shape)
            x = x.reshape(x.shape[0], -1)
        elif isinstance(layer, Conv2D):
            cols = _conv_windows(x, layer.kernel, layer.stride)
            caches.append((x.shape, cols))
            w = params[param_key(layer.name, "weight")]
            b = params[param_key(layer.name, "bias")]
            x = np.einsum("nchwij,ocij->nohw", cols, w, optimize=True) + b[None, :, None, None]
        elif isinstance(layer, MaxPool2D):
            k = layer.kernel
            n, c, h, w = x.shape
            ho, wo = h // k, w // k
            win = x[:, :, : ho * k, : wo * k].reshape(n, c, ho, k, wo, k)
            win = win.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, k * k)
            arg = win.argmax(axis=-1)
            caches.append((x.shape, arg))
            x = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
        else:  # pragma: no cover - ModelSpec already rejects these
            raise InvalidSpecError(f"unknown layer {layer!r}")
    return x, caches


def forward(spec: ModelSpec, params: Parameters, batch: np.ndarray) -> np.ndarray:
    """Logits of shape ``(batch_size, num_outputs)``. Sigmoid is left to callers."""
    check_params(spec, params)
    x = _check_batch(spec, batch)
    logits, _ = _forward(spec, params, x)
    if not np.all(np.isfinite(logits)):
        raise NonFiniteError("non-finite logits in forward pass")
    return logits


def _backward(spec: ModelSpec, params: Parameters, caches, grad: np.ndarray) -> Parameters:
    grads: Parameters = {}
    for layer, cache in zip(reversed(spec.layers), reversed(caches)):
        if isinstance(layer, Dense):
            wk, bk = param_key(layer.name, "weight"), param_key(layer.name, "bias")
            grads[wk] = cache.T @ grad
            grads[bk] = grad.sum(axis=0)
            grad = grad @ params[wk].T
        elif isinstance(layer, ReLU):
            grad = grad * cache
        elif isinstance(layer, Flatten):
            grad = grad.reshape(cache)
        elif isinstance(layer, Conv2D):
            in_shape, cols = cache
            wk, bk = param_key(layer.name, "weight"), param_key(layer.name, "bias")
            w = params[wk]
            grads[wk] = np.einsum("nohw,nchwij->ocij", grad, cols, optimize=True)
            grads[bk] = grad.sum(axis=(0, 2, 3))
            dcols = np.einsum("nohw,ocij->nchwij", grad, w, optimize=True)
            dx = np.zeros(in_shape)
            s, k = layer.stride, layer.kernel
            ho, wo = grad.shape[2], grad.shape[3]
            for i in range(k):
                for j in range(k):
                    dx[:, :, i : i + s * ho : s, j : j + s * wo : s] += dcols[..., i, j]
            grad = dx
        elif isinstance(layer, MaxPool2D):
            in_shape, arg = cache
            k = layer.kernel
            n, c, ho, wo = grad.shape
            win = np.zeros((n, c, ho, wo, k * k))
            np.put_along_axis(win, arg[..., None], grad[..., None], axis=-1)
            win = win.reshape(n, c, ho, wo, k, k).transpose(0, 1, 2, 4, 3, 5)
            dx = np.zeros(in_shape)
            dx[:, :, : ho * k, : wo * k] = win.reshape(n, c, ho * k, wo * k)
            grad = dx
    return {key: grads[key] for key in params}


def loss_and_grads(
    spec: ModelSpec,
    params: Parameters,
    batch: np.ndarray,
    labels: np.ndarray,
    loss_cfg: LossConfig,
):
    """Weighted multilabel BCE and its exact gradient w.r.t. every parameter."""
    check_params(spec, params)
    x = _check_batch(spec, batch)
    labels = np.asarray(labels)
    logits, caches = _forward(spec, params, x)
    if not np.all(np.isfinite(logits)):
        raise NonFiniteError("non-finite logits in forward pass")
    loss, dlogits = weighted_bce(logits, labels, loss_cfg)
    return loss, _backward(spec, params, caches, dlogits)
