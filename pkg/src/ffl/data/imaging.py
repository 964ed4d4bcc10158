"""Grayscale radiograph preprocessing and training-time augmentation.

Gray images are 2-D ``uint8`` arrays. The resampling functions also accept
float arrays, in which case they return floats without rounding.
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage

MAX_ROTATION_DEG = 10.0


def _round_u8(x: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(x + 0.5), 0, 255).astype(np.uint8)


def as_gray_image(img) -> np.ndarray:
    arr = np.asarray(img)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"expected a non-empty 2-D image, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if np.any(arr < 0) or np.any(arr > 255) or np.any(arr != np.floor(arr)):
            raise ValueError("gray image values must be integers in [0, 255]")
        arr = arr.astype(np.uint8)
    return arr


def minmax_normalize(img) -> np.ndarray:
    """Shift the minimum to 0, scale the maximum to 255, truncate to ``uint8``."""
    v = np.asarray(img, dtype=np.float64)
    if v.size == 0:
        raise ValueError("empty image")
    if not np.all(np.isfinite(v)):
        raise ValueError("image contains non-finite values")
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros(v.shape, dtype=np.uint8)
    out = np.floor(255.0 * ((v - lo) / (hi - lo)))
    return np.clip(out, 0, 255).astype(np.uint8)


def hist_equalize(img) -> np.ndarray:
    """Map each gray level through the normalized cumulative histogram.

    ``out(v) = round(255 * (cdf(v) - cdf_min) / (N - cdf_min))`` with halves
    rounded up; evaluated in integer arithmetic.
    """
    g = as_gray_image(img)
    cdf = np.bincount(g.ravel(), minlength=256).cumsum().astype(np.int64)
    n = int(g.size)
    cdf_min = int(cdf[cdf > 0][0])
    denom = n - cdf_min
    if denom == 0:
        return g.copy()
    num = 255 * np.maximum(cdf - cdf_min, 0)
    lut = ((2 * num + denom) // (2 * denom)).astype(np.uint8)
    return lut[g]


def _sample(img: np.ndarray, rows: np.ndarray, cols: np.ndarray, cval=None) -> np.ndarray:
    src = img.astype(np.float64)
    if cval is None:
        out = ndimage.map_coordinates(src, [rows, cols], order=1, mode="nearest")
    else:
        out = ndimage.map_coordinates(src, [rows, cols], order=1, mode="constant", cval=cval)
    return _round_u8(out) if img.dtype == np.uint8 else out


def resize(img, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with corner-aligned sampling.

    Output pixel ``i`` samples input coordinate ``i * (in - 1) / (out - 1)``;
    a length-1 output axis samples the input's center.
    """
    img = np.asarray(img)
    if img.ndim != 2 or img.size == 0:
        raise ValueError(f"expected a non-empty 2-D image, got shape {img.shape}")
    if out_h <= 0 or out_w <= 0:
        raise ValueError("target size must be positive")
    h, w = img.shape
    if (out_h, out_w) == (h, w):
        return img.copy()

    def axis(n_in, n_out):
        if n_out == 1:
            return np.array([(n_in - 1) / 2.0])
        return np.arange(n_out) * ((n_in - 1) / (n_out - 1))

    rows, cols = np.meshgrid(axis(h, out_h), axis(w, out_w), indexing="ij")
    return _sample(img, rows, cols)


def flip(img) -> np.ndarray:
    """Medio-lateral (left-right) flip."""
    return np.asarray(img)[:, ::-1].copy()


def augment_flip(img, rng: np.random.Generator, p: float = 0.5) -> np.ndarray:
    return flip(img) if rng.random() < p else np.asarray(img).copy()


def rotate(img, angle_deg: float) -> np.ndarray:
    """Rotate about the image center with bilinear resampling; outside pixels become 0.

    In (column, row) coordinates a pixel at polar angle ``phi`` around the
    center moves to ``phi - angle_deg``.
    """
    img = np.asarray(img)
    if img.ndim != 2 or img.size == 0:
        raise ValueError(f"expected a non-empty 2-D image, got shape {img.shape}")
    if angle_deg == 0:
        return img.copy()
    h, w = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = np.deg2rad(angle_deg)
    c, s = np.cos(theta), np.sin(theta)
    rr, cc = np.mgrid[0:h, 0:w].astype(np.float64)
    dx, dy = cc - cx, rr - cy
    src_x = c * dx - s * dy + cx
    src_y = s * dx + c * dy + cy
    return _sample(img, src_y, src_x, cval=0.0)


def augment_rotate(img, rng: np.random.Generator, max_deg: float = MAX_ROTATION_DEG) -> np.ndarray:
    return rotate(img, rng.uniform(0.0, max_deg))


def augment(img, rng: np.random.Generator) -> np.ndarray:
    """Training augmentation: random flip then a random rotation in [0, 10] degrees."""
    return augment_rotate(augment_flip(img, rng), rng)


def preprocess(img, size=None) -> np.ndarray:
    """Resize (optional), min-max normalize to ``uint8``, then histogram-equalize."""
    arr = np.asarray(img, dtype=np.float64)
    if size is not None:
        arr = resize(arr, *size)
    return hist_equalize(minmax_normalize(arr))
