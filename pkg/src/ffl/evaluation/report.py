"""Per-label and macro-averaged evaluation reports.

:meth:`MetricsReport.to_dict` produces the JSON layout stored in run records::

    {
      "labels": [{"name", "auroc", "threshold", "youden_j",
                  "accuracy", "sensitivity", "specificity"}, ...],
      "excluded_labels": [names of single-class labels],
      "macro": {"auroc", "accuracy", "sensitivity", "specificity"},
      "auroc_across_labels_std": float,
      "bootstrap": {"mean", "std", "ci95": [lo, hi], "B"},
      "bootstrap_seed": int,
      "p_value_vs_baseline": float or null
    }
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .bootstrap import ScoreSet, Spread, bootstrap_spread, macro_auroc, paired_bootstrap_pvalue
from .metrics import UndefinedMetricError, auroc, confusion_metrics, youden_index

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LabelMetrics:
    name: str
    auroc: float
    threshold: float
    youden_j: float
    accuracy: float
    sensitivity: float
    specificity: float

    def to_dict(self):
        return dict(self.__dict__)


@dataclass(frozen=True)
class MetricsReport:
    labels: Tuple[LabelMetrics, ...]
    excluded_labels: Tuple[str, ...]
    macro_auroc: float
    macro_accuracy: float
    macro_sensitivity: float
    macro_specificity: float
    auroc_across_labels_std: float
    bootstrap: Spread
    bootstrap_seed: int
    p_value_vs_baseline: Optional[float] = None

    def to_dict(self):
        return {
            "labels": [m.to_dict() for m in self.labels],
            "excluded_labels": list(self.excluded_labels),
            "macro": {
                "auroc": self.macro_auroc,
                "accuracy": self.macro_accuracy,
                "sensitivity": self.macro_sensitivity,
                "specificity": self.macro_specificity,
            },
            "auroc_across_labels_std": self.auroc_across_labels_std,
            "bootstrap": self.bootstrap.to_dict(),
            "bootstrap_seed": self.bootstrap_seed,
            "p_value_vs_baseline": self.p_value_vs_baseline,
        }

    @classmethod
    def from_dict(cls, d) -> "MetricsReport":
        b = d["bootstrap"]
        return cls(
            labels=tuple(LabelMetrics(**m) for m in d["labels"]),
            excluded_labels=tuple(d["excluded_labels"]),
            macro_auroc=d["macro"]["auroc"],
            macro_accuracy=d["macro"]["accuracy"],
            macro_sensitivity=d["macro"]["sensitivity"],
            macro_specificity=d["macro"]["specificity"],
            auroc_across_labels_std=d["auroc_across_labels_std"],
            bootstrap=Spread(b["mean"], b["std"], tuple(b["ci95"]), b["B"]),
            bootstrap_seed=d["bootstrap_seed"],
            p_value_vs_baseline=d.get("p_value_vs_baseline"),
        )


def macro_report(
    s: ScoreSet, baseline: Optional[ScoreSet] = None, B: int = 1000, seed: int = 0
) -> MetricsReport:
    """Per-label metrics at each label's Youden threshold, macro-averaged over labels.

    Labels whose test cases are all one class are excluded (and listed). With a
    ``baseline`` scored on the same cases, the report also carries the paired
    one-sided p-value for ``s`` beating it on macro AUROC.
    """
    per = []
    excluded = []
    for j, name in enumerate(s.label_names):
        sc, y = s.scores[:, j], s.labels[:, j]
        try:
            a = auroc(sc, y)
        except UndefinedMetricError:
            log.warning("label %r has a single class in the evaluation set; skipped", name)
            excluded.append(name)
            continue
        t, jv = youden_index(sc, y)
        acc, sens, spec = confusion_metrics(sc, y, t)
        per.append(LabelMetrics(name, a, t, jv, acc, sens, spec))
    if not per:
        raise UndefinedMetricError("every label is single-class; nothing to report")
    kept = tuple(m.name for m in per)
    sub = s.select(kept)
    aurocs = np.array([m.auroc for m in per])
    p = None
    if baseline is not None:
        p = paired_bootstrap_pvalue(sub, baseline.select(kept), macro_auroc, B, seed)
    return MetricsReport(
        labels=tuple(per),
        excluded_labels=tuple(excluded),
        macro_auroc=float(aurocs.mean()),
        macro_accuracy=float(np.mean([m.accuracy for m in per])),
        macro_sensitivity=float(np.mean([m.sensitivity for m in per])),
        macro_specificity=float(np.mean([m.specificity for m in per])),
        auroc_across_labels_std=float(aurocs.std(ddof=1)) if len(per) > 1 else 0.0,
        bootstrap=bootstrap_spread(sub, macro_auroc, B, seed),
        bootstrap_seed=int(seed),
        p_value_vs_baseline=p,
    )
