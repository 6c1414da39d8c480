"""Reference computations kept independent of the code under test."""

import math

import numpy as np


def central_diff(f, x, h=1e-6):
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f(x)
        flat[i] = old - h
        down = f(x)
        flat[i] = old
        g[i] = (up - down) / (2 * h)
    return grad


def max_rel_err(a, b, floor=1e-8):
    """Largest elementwise |a - b| / max(|a|, |b|), ignoring pairs that are both ~0."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = np.maximum(np.abs(a), np.abs(b))
    both_tiny = denom < floor
    rel = np.where(both_tiny, 0.0, np.abs(a - b) / np.where(both_tiny, 1.0, denom))
    return float(rel.max())


def naive_logits(layers, x):
    """Forward pass with Python loops over plain lists."""
    h = [float(v) for v in x]
    for w, b, act in layers:
        out = []
        for r in range(len(b)):
            s = float(b[r])
            for c in range(len(h)):
                s += float(w[r][c]) * h[c]
            out.append(max(s, 0.0) if act == "relu" else s)
        h = out
    return h


def scalar_adam(grad_fn, p, lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    path = []
    for t in range(1, steps + 1):
        g = grad_fn(p)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p = p - lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
        path.append(p)
    return path


def naive_row(method, kappa, results):
    """Second, loop-based aggregator for BenchRow cross-checks."""
    n = 0
    wins = 0
    dist_sum = 0.0
    iter_sum = 0
    for r in results:
        n += 1
        iter_sum += r.iterations
        if r.success:
            wins += 1
            dist_sum += r.l2_distance
    return (method, float(kappa), wins / n, dist_sum / wins if wins else None, iter_sum / n, n)
