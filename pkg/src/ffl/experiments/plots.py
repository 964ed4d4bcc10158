"""Grouped bar chart of macro AUROC by site and run, with its data as CSV."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import List, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .runner import RunRecord  # noqa: E402

PLOT_COLUMNS = ("site", "arm", "seed", "macro_auroc", "ci95_low", "ci95_high")


def _arm_labels(records: Sequence[RunRecord]) -> List[str]:
    base = [r.mode for r in records]
    if len(set(base)) == len(base):
        return base
    labels = [f"{r.mode} seed {r.seed}" for r in records]
    if len(set(labels)) == len(labels):
        return labels
    return [f"{lab} #{i}" for i, lab in enumerate(labels)]


def emit_plots(records: Sequence[RunRecord], out_dir) -> dict:
    """Write ``auroc_by_site.csv`` and ``auroc_by_site.svg``; returns their paths.

    The CSV is the authoritative copy of the plotted numbers (one row per site
    and run, values taken verbatim from the records).
    """
    if not records:
        raise ValueError("need at least one run record to plot")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    arms = _arm_labels(records)
    sites = sorted({s for r in records for s in r.sites})

    csv_path = out_dir / "auroc_by_site.csv"
    with csv_path.open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(PLOT_COLUMNS)
        for sid in sites:
            for arm, r in zip(arms, records):
                if sid not in r.sites:
                    continue
                rep = r.sites[sid].report
                lo, hi = rep.bootstrap.ci95
                w.writerow([sid, arm, r.seed, repr(rep.macro_auroc), repr(lo), repr(hi)])

    plt.rcParams["svg.hashsalt"] = "ffl"
    fig, ax = plt.subplots(figsize=(1.6 + 1.2 * len(sites) * max(1, len(records)) / 2, 3.2))
    width = 0.8 / len(records)
    x = np.arange(len(sites))
    for i, (arm, r) in enumerate(zip(arms, records)):
        vals, errs = [], [[], []]
        for sid in sites:
            if sid in r.sites:
                rep = r.sites[sid].report
                vals.append(rep.macro_auroc)
                lo, hi = rep.bootstrap.ci95
                errs[0].append(max(rep.macro_auroc - lo, 0.0))
                errs[1].append(max(hi - rep.macro_auroc, 0.0))
            else:
                vals.append(np.nan)
                errs[0].append(0.0)
                errs[1].append(0.0)
        ax.bar(x + (i - (len(records) - 1) / 2) * width, vals, width, yerr=errs, capsize=2, label=arm)
    ax.set_xticks(x, sites)
    ax.set_xlabel("site")
    ax.set_ylabel("macro AUROC")
    ax.set_ylim(0.0, 1.0)
    ax.legend(fontsize="small", loc="lower right")
    fig.tight_layout()
    svg_path = out_dir / "auroc_by_site.svg"
    fig.savefig(svg_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return {"csv": csv_path, "svg": svg_path}
