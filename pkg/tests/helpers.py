import numpy as np

from ffl.nn import loss_and_grads

# Gradients smaller than this are compared absolutely; roundoff in a central
# difference with h=1e-6 is ~1e-10 for losses of order one.
FD_DENOM_FLOOR = 1e-6


def finite_difference_grads(spec, params, x, y, cfg, h=1e-6):
    fd = {}
    for key, value in params.items():
        g = np.zeros_like(value)
        flat = value.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            lp, _ = loss_and_grads(spec, params, x, y, cfg)
            flat[i] = old - h
            lm, _ = loss_and_grads(spec, params, x, y, cfg)
            flat[i] = old
            g.reshape(-1)[i] = (lp - lm) / (2 * h)
        fd[key] = g
    return fd


def max_relative_error(grads, fd):
    worst = 0.0
    for key in grads:
        a, b = grads[key], fd[key]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), FD_DENOM_FLOOR)
        worst = max(worst, float(np.max(np.abs(a - b) / denom)))
    return worst


def brute_auroc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


def brute_youden(scores, labels):
    scores = list(scores)
    labels = list(labels)
    P = sum(labels)
    N = len(labels) - P
    best_t, best_j = None, None
    for t in sorted(set(scores)):
        tp = sum(1 for s, y in zip(scores, labels) if s >= t and y == 1)
        fp = sum(1 for s, y in zip(scores, labels) if s >= t and y == 0)
        j = tp / P - fp / N
        if best_j is None or j > best_j:
            best_t, best_j = t, j
    return best_t, best_j
