from __future__ import annotations

from typing import Sequence, Tuple

import numpy as np

from ..nn.layers import Parameters
from .config import Aggregation

Update = Tuple[str, Parameters, int]


def aggregate(updates: Sequence[Update], mode=Aggregation.UNWEIGHTED_MEAN) -> Parameters:
    """Average backbone parameters over sites.

    ``updates`` holds ``(site_id, params, n_train)``. Terms are summed in
    ascending ``site_id`` order so the result does not depend on arrival order.
    Each coordinate is clipped into the sites' ``[min, max]`` range to absorb
    last-ulp rounding in the sum.
    """
    mode = Aggregation(mode)
    if not updates:
        raise ValueError("nothing to aggregate")
    ordered = sorted(updates, key=lambda u: u[0])
    ids = [u[0] for u in ordered]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate site ids in updates: {ids}")
    keys = list(ordered[0][1])
    for sid, params, n in ordered:
        if set(params) != set(keys):
            raise ValueError(f"site {sid}: parameter keys differ from site {ids[0]}")
        for k in keys:
            if params[k].shape != ordered[0][1][k].shape:
                raise ValueError(f"site {sid}: shape mismatch for {k}")
    if len(ordered) == 1:
        return {k: ordered[0][1][k].copy() for k in keys}

    if mode is Aggregation.UNWEIGHTED_MEAN:
        weights = None
    else:
        counts = np.array([u[2] for u in ordered], dtype=np.float64)
        if np.any(counts <= 0):
            raise ValueError("sample-weighted mean needs positive n_train for every site")
        weights = counts / counts.sum()

    out: Parameters = {}
    for k in keys:
        stack = [u[1][k] for u in ordered]
        if weights is None:
            acc = stack[0].astype(np.float64, copy=True)
            for p in stack[1:]:
                acc += p
            acc /= len(stack)
        else:
            acc = weights[0] * stack[0]
            for w, p in zip(weights[1:], stack[1:]):
                acc += w * p
        lo = np.minimum.reduce(stack)
        hi = np.maximum.reduce(stack)
        out[k] = np.clip(acc, lo, hi)
    return out
