"""Row-resampling bootstrap for spreads and paired one-sided p-values.

Resample ``b`` draws from its own generator seeded by ``(seed, b)``, so any
subset of resamples can be recomputed independently and in any order.
Resamples on which the metric is undefined (a label loses a class) are redrawn
from the same generator, at most ``MAX_REDRAWS`` times.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from .metrics import UndefinedMetricError, auroc

MAX_REDRAWS = 100


@dataclass(frozen=True)
class ScoreSet:
    """Post-sigmoid scores and binary labels for ``n`` cases and ``L`` labels."""

    scores: np.ndarray
    labels: np.ndarray
    label_names: Tuple[str, ...]

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        labels = np.asarray(self.labels)
        if scores.ndim == 1:
            scores = scores[:, None]
        if labels.ndim == 1:
            labels = labels[:, None]
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels.astype(np.int8))
        object.__setattr__(self, "label_names", tuple(self.label_names))
        if scores.shape != labels.shape or scores.shape[1] != len(self.label_names):
            raise ValueError(
                f"scores {scores.shape}, labels {labels.shape} and "
                f"{len(self.label_names)} label names disagree"
            )
        if not np.all(np.isfinite(scores)):
            raise ValueError("scores must be finite")
        if not np.all((labels == 0) | (labels == 1)):
            raise ValueError("labels must be 0 or 1")

    def __len__(self):
        return self.scores.shape[0]

    def take(self, idx) -> "ScoreSet":
        return ScoreSet(self.scores[idx], self.labels[idx], self.label_names)

    def select(self, names) -> "ScoreSet":
        cols = [self.label_names.index(n) for n in names]
        return ScoreSet(self.scores[:, cols], self.labels[:, cols], tuple(names))


Metric = Callable[[ScoreSet], float]


def macro_auroc(s: ScoreSet) -> float:
    """Unweighted mean AUROC over labels; undefined if any label is single-class."""
    return float(np.mean([auroc(s.scores[:, j], s.labels[:, j]) for j in range(s.labels.shape[1])]))


def _rng(seed: int, b: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(b,)))


def _resample_values(n: int, metric_of_idx, B: int, seed: int):
    out = []
    for b in range(B):
        rng = _rng(seed, b)
        for _ in range(MAX_REDRAWS):
            idx = rng.integers(0, n, size=n)
            try:
                out.append(metric_of_idx(idx))
                break
            except UndefinedMetricError:
                continue
        else:
            raise UndefinedMetricError(
                f"metric undefined on {MAX_REDRAWS} consecutive redraws of resample {b}"
            )
    return out


@dataclass(frozen=True)
class Spread:
    mean: float
    std: float
    ci95: Tuple[float, float]
    B: int

    def to_dict(self):
        return {"mean": self.mean, "std": self.std, "ci95": list(self.ci95), "B": self.B}


def bootstrap_spread(s: ScoreSet, metric: Metric = macro_auroc, B: int = 1000, seed: int = 0) -> Spread:
    """Mean, sample standard deviation and 2.5/97.5 percentile interval over ``B`` resamples."""
    if B < 1:
        raise ValueError("B must be >= 1")
    vals = np.asarray(_resample_values(len(s), lambda idx: metric(s.take(idx)), B, seed))
    std = float(vals.std(ddof=1)) if B > 1 else 0.0
    lo, hi = np.percentile(vals, [2.5, 97.5])
    return Spread(float(vals.mean()), std, (float(lo), float(hi)), B)


def paired_bootstrap_pvalue(
    a: ScoreSet, b: ScoreSet, metric: Metric = macro_auroc, B: int = 1000, seed: int = 0
) -> float:
    """One-sided p-value for ``metric(a) > metric(b)`` on the same cases.

    Both systems are evaluated on shared resamples;
    ``p = (1 + #{metric(a) <= metric(b)}) / (B + 1)``.
    """
    if B < 1:
        raise ValueError("B must be >= 1")
    if len(a) != len(b) or a.label_names != b.label_names or not np.array_equal(a.labels, b.labels):
        raise ValueError("paired bootstrap needs both score sets on the same cases and labels")

    def both(idx):
        return metric(a.take(idx)), metric(b.take(idx))

    pairs = _resample_values(len(a), both, B, seed)
    not_better = sum(1 for ma, mb in pairs if ma <= mb)
    return (1 + not_better) / (B + 1)
