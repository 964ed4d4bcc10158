"""AUROC, Youden thresholds, bootstrap spreads and paired p-values."""
from .bootstrap import (
    ScoreSet,
    Spread,
    bootstrap_spread,
    macro_auroc,
    paired_bootstrap_pvalue,
)
from .metrics import (
    UndefinedMetricError,
    auroc,
    confusion_metrics,
    roc_curve,
    youden_index,
    youden_threshold,
)
from .report import LabelMetrics, MetricsReport, macro_report

__all__ = [
    "LabelMetrics",
    "MetricsReport",
    "ScoreSet",
    "Spread",
    "UndefinedMetricError",
    "auroc",
    "bootstrap_spread",
    "confusion_metrics",
    "macro_auroc",
    "macro_report",
    "paired_bootstrap_pvalue",
    "roc_curve",
    "youden_index",
    "youden_threshold",
]
