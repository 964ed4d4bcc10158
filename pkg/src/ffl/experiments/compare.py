"""Side-by-side comparison of two runs on the same test sets."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

from ..evaluation.bootstrap import macro_auroc, paired_bootstrap_pvalue
from .runner import RunRecord

COLUMNS = ("site", "arm_a_auroc", "arm_b_auroc", "p_value")


class MismatchedRunsError(ValueError):
    pass


@dataclass(frozen=True)
class ComparisonRow:
    site: str
    arm_a_auroc: float
    arm_b_auroc: float
    p_value: float


def compare_runs(a: RunRecord, b: RunRecord, B: Optional[int] = None, seed: Optional[int] = None) -> List[ComparisonRow]:
    """Per-site macro AUROC of both runs plus the paired bootstrap p-value for ``b`` beating ``a``.

    Both runs must cover the same sites with identical test sets. Labels that
    are single-class in the test set are left out of both arms. ``B`` and
    ``seed`` default to run ``a``'s evaluation settings.
    """
    if sorted(a.sites) != sorted(b.sites):
        raise MismatchedRunsError(f"runs cover different sites: {sorted(a.sites)} vs {sorted(b.sites)}")
    ev = a.config.get("eval", {})
    B = ev.get("bootstrap", 1000) if B is None else B
    seed = ev.get("seed", 0) if seed is None else seed
    rows = []
    for sid in sorted(a.sites):
        sa, sb = a.sites[sid], b.sites[sid]
        if sa.test_set_hash != sb.test_set_hash:
            raise MismatchedRunsError(f"site {sid}: the runs were evaluated on different test sets")
        kept = [n for n in sa.label_names if n not in set(sa.report.excluded_labels)]
        xa, xb = sa.score_set().select(kept), sb.score_set().select(kept)
        p = paired_bootstrap_pvalue(xb, xa, macro_auroc, B, seed)
        rows.append(ComparisonRow(sid, macro_auroc(xa), macro_auroc(xb), p))
    return rows


def write_comparison_csv(rows: List[ComparisonRow], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([r.site, repr(r.arm_a_auroc), repr(r.arm_b_auroc), repr(r.p_value)])
    return path
