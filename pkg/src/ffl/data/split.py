from __future__ import annotations

import numpy as np

from .dataset import MultilabelDataset


def _label_cost(pos_t, target_pos):
    a = (pos_t - target_pos) / np.maximum(target_pos, 1.0)
    return float((a * a).sum())


def split_train_test(ds: MultilabelDataset, test_fraction: float, seed: int):
    """Patient-wise split with approximate per-label stratification.

    Patients are visited in random order. A first pass adds a patient to the
    test side when that brings the record count closer to ``test_fraction``
    of the total without pushing any label's positive count away from its
    target; a second pass fills the remaining record budget from the skipped
    patients. All records of a patient stay together.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    groups: dict = {}
    for i, pid in enumerate(ds.patient_ids):
        groups.setdefault(pid, []).append(i)
    if len(groups) < 2:
        raise ValueError("need at least two patients to split")
    members = list(groups.values())
    order = np.random.default_rng(seed).permutation(len(members))

    labels = ds.labels.astype(np.float64)
    target_n = test_fraction * len(ds)
    target_pos = test_fraction * labels.sum(axis=0)
    n_t = 0
    pos_t = np.zeros(ds.n_labels)
    chosen = []
    skipped = []
    for g in order:
        rows = members[g]
        p = labels[rows].sum(axis=0)
        closer = abs(n_t + len(rows) - target_n) < abs(n_t - target_n)
        if closer and _label_cost(pos_t + p, target_pos) <= _label_cost(pos_t, target_pos):
            chosen.append(g)
            n_t += len(rows)
            pos_t += p
        else:
            skipped.append(g)
    for g in skipped:
        rows = members[g]
        if abs(n_t + len(rows) - target_n) < abs(n_t - target_n):
            chosen.append(g)
            n_t += len(rows)
    if not chosen:
        chosen = [int(order[0])]
    elif len(chosen) == len(members):
        chosen.pop()
    in_test = set(chosen)
    test_idx = sorted(i for g in in_test for i in members[g])
    train_idx = sorted(i for g in range(len(members)) if g not in in_test for i in members[g])
    return ds.subset(train_idx), ds.subset(test_idx)
