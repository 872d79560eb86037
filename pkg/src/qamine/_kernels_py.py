"""Pure numpy fallback for the compiled kernels (same signatures)."""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def _midpoint(a: float, b: float) -> float:
    m = 0.5 * (a + b)
    return b if m <= a else m


def best_split_gini(x, w, p, min_leaf):
    n = x.shape[0]
    if n < 2:
        return np.inf, np.nan
    cw = np.cumsum(w)
    cp = np.cumsum(p)
    nl, pl = cw[:-1], cp[:-1]
    nr, pr = cw[-1] - nl, cp[-1] - pl
    ok = (x[:-1] != x[1:]) & (nl >= min_leaf) & (nr >= min_leaf) & (nl > 0) & (nr > 0)
    if not ok.any():
        return np.inf, np.nan
    with np.errstate(divide="ignore", invalid="ignore"):
        imp = 2.0 * pl * (nl - pl) / nl + 2.0 * pr * (nr - pr) / nr
    imp = np.where(ok, imp, np.inf)
    i = int(np.argmin(imp))
    return float(imp[i]), _midpoint(float(x[i]), float(x[i + 1]))


def best_split_sse(x, w, g, min_leaf):
    n = x.shape[0]
    if n < 2:
        return -np.inf, np.nan
    cw = np.cumsum(w)
    cg = np.cumsum(g)
    nl, gl = cw[:-1], cg[:-1]
    nr, gr = cw[-1] - nl, cg[-1] - gl
    ok = (x[:-1] != x[1:]) & (nl >= min_leaf) & (nr >= min_leaf) & (nl > 0) & (nr > 0)
    if not ok.any():
        return -np.inf, np.nan
    with np.errstate(divide="ignore", invalid="ignore"):
        score = gl * gl / nl + gr * gr / nr
    score = np.where(ok, score, -np.inf)
    i = int(np.argmax(score))
    return float(score[i]), _midpoint(float(x[i]), float(x[i + 1]))


def _sigmoid(z):
    z = np.clip(z, -30.0, 30.0)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sgd_epoch(indptr, indices, values, scalars, targets, order, batch_size, lr, l2, loss_kind, w, v, bias, resid):
    n = order.shape[0]
    for start in range(0, n, batch_size):
        rows = order[start:start + batch_size]
        m = float(rows.shape[0])
        lo, hi = indptr[rows], indptr[rows + 1]
        lens = hi - lo
        flat = np.concatenate([np.arange(a, b) for a, b in zip(lo, hi)]) if lens.sum() else np.zeros(0, dtype=np.int64)
        idx = indices[flat]
        val = values[flat]
        seg = np.repeat(np.arange(rows.shape[0]), lens)
        z = np.full(rows.shape[0], bias[0])
        np.add.at(z, seg, w[idx] * val)
        z += scalars[rows] @ v
        y = _sigmoid(z)
        t = targets[rows]
        r = y - t if loss_kind == 0 else 2.0 * (y - t) * y * (1.0 - y)
        if l2 != 0.0:
            decay = 1.0 - lr * l2
            w *= decay
            v *= decay
        step = lr * r / m
        np.add.at(w, idx, -step[seg] * val)
        v -= step @ scalars[rows]
        bias[0] -= step.sum()
