"""On-disk dataset directories and 8-bit PGM images.

A dataset directory holds

* ``features.bin``: ASCII ``FFLD``, ``ndim`` as u32 LE, each dim as u32 LE,
  then the features as row-major f64 LE;
* ``labels.csv``: header ``patient_id,<label names...>``, then one row per
  record with its patient id and 0/1 values, in feature-row order.
"""
from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .dataset import MultilabelDataset

FEATURES_MAGIC = b"FFLD"
FEATURES_FILE = "features.bin"
LABELS_FILE = "labels.csv"


class DatasetFormatError(ValueError):
    pass


def write_features(path, features: np.ndarray) -> None:
    features = np.asarray(features, dtype="<f8")
    header = FEATURES_MAGIC + struct.pack("<I", features.ndim)
    header += struct.pack(f"<{features.ndim}I", *features.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(features).tobytes())


def read_features(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != FEATURES_MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < 8:
        raise DatasetFormatError(f"{path}: truncated header")
    (ndim,) = struct.unpack_from("<I", raw, 4)
    end = 8 + 4 * ndim
    if ndim == 0 or len(raw) < end:
        raise DatasetFormatError(f"{path}: truncated header")
    shape = struct.unpack_from(f"<{ndim}I", raw, 8)
    count = int(np.prod(shape))
    if len(raw) - end != 8 * count:
        raise DatasetFormatError(
            f"{path}: expected {8 * count} data bytes for shape {shape}, got {len(raw) - end}"
        )
    return np.frombuffer(raw, dtype="<f8", offset=end).reshape(shape).astype(np.float64)


def save_dataset(ds: MultilabelDataset, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_features(d / FEATURES_FILE, ds.features)
    with open(d / LABELS_FILE, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["patient_id", *ds.label_names])
        for pid, row in zip(ds.patient_ids, ds.labels):
            w.writerow([pid, *(int(v) for v in row)])
    return d


def load_dataset(directory) -> MultilabelDataset:
    d = Path(directory)
    features = read_features(d / FEATURES_FILE)
    with open(d / LABELS_FILE, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows[0]) < 2:
        raise DatasetFormatError(f"{d / LABELS_FILE}: missing header with label names")
    names = rows[0][1:]
    body = rows[1:]
    try:
        labels = np.array([[int(v) for v in r[1:]] for r in body], dtype=np.int64)
    except ValueError as exc:
        raise DatasetFormatError(f"{d / LABELS_FILE}: {exc}") from None
    if any(len(r) != len(names) + 1 for r in body):
        raise DatasetFormatError(f"{d / LABELS_FILE}: ragged rows")
    labels = labels.reshape(len(body), len(names))
    return MultilabelDataset(features, labels, tuple(names), tuple(r[0] for r in body))


def read_pgm(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.format != "PPM" or im.mode not in ("L", "I", "I;16", "I;16B"):
            raise DatasetFormatError(f"{path}: not a grayscale PGM (mode {im.mode})")
        arr = np.asarray(im)
    if arr.dtype != np.uint8:
        raise DatasetFormatError(f"{path}: only 8-bit PGM is supported")
    return arr


def write_pgm(path, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.dtype != np.uint8 or img.ndim != 2:
        raise ValueError("PGM output requires a 2-D uint8 image")
    Image.fromarray(img, mode="L").save(path, format="PPM")
