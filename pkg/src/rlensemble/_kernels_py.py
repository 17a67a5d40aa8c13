"""Pure-Python versions of the compiled kernels in ``_kernels.pyx``.

Same arithmetic, same operation order; used when the extension is not built
or when ``RLENSEMBLE_PURE_PYTHON=1``.
"""

from __future__ import annotations

import math

import numpy as np

REWARD_FLOOR = 0.01


def error_state(y, yhat, n_buckets, eps_y, fallback_var):
    err = y - yhat
    degenerate = abs(y) < eps_y
    if degenerate:
        raw = err * err / fallback_var * 100.0
    else:
        raw = err * err / (y * y) * 100.0
    if raw < 0.0:
        raw = 0.0
    elif raw > 100.0:
        raw = 100.0
    bucket = int(math.floor(raw / (100.0 / n_buckets)))
    if bucket >= n_buckets:
        bucket = n_buckets - 1
    return raw, bucket, degenerate


def reward_value(prev_raw, raw, kind):
    if kind == 0:
        return prev_raw - raw
    if kind == 1:
        return 1.0 / max(abs(raw), REWARD_FLOOR)
    return 1.0 / max(abs(raw - prev_raw), REWARD_FLOOR)


def _softmax_into(logits, out):
    m = len(logits)
    zmax = logits[0]
    for i in range(1, m):
        if logits[i] > zmax:
            zmax = logits[i]
    s = 0.0
    for i in range(m):
        out[i] = math.exp(logits[i] - zmax)
        s += out[i]
    s2 = 0.0
    for i in range(m):
        out[i] = out[i] / s
        s2 += out[i]
    for i in range(m):
        out[i] = out[i] / s2


def run_episode(theta, values, preds, truth, noise, sigma, alpha_a, alpha_c, gamma,
                init_bucket, eps_y, fallback_var, reward_kind,
                raw_out, bucket_out, reward_out, weights_out, degenerate_out):
    """One training episode of the tabular actor-critic; mutates ``theta`` and ``values``.

    ``preds`` is K x M, ``noise`` K x M standard normals. Row 0 of the state
    outputs is the reset state, scored on the first sample with uniform
    weights (``init_bucket < 0``) or the exploit action of ``init_bucket``;
    rows 1..K are the per-step states.
    """
    n_buckets, m = theta.shape
    k_steps = preds.shape[0]
    th = theta.tolist()
    v = values.tolist()
    p = preds.tolist()
    y = truth.tolist()
    g = noise.tolist()
    w = [0.0] * m
    logits = [0.0] * m

    if init_bucket < 0:
        for i in range(m):
            w[i] = 1.0 / m
    else:
        _softmax_into(th[init_bucket], w)
    yhat = 0.0
    for i in range(m):
        yhat += w[i] * p[0][i]
    prev_raw, prev_b, deg = error_state(y[0], yhat, n_buckets, eps_y, fallback_var)
    raw_out[0] = prev_raw
    bucket_out[0] = prev_b
    degenerate_out[0] = deg

    actor_on = sigma > 0.0 and alpha_a != 0.0
    for k in range(k_steps):
        row = th[prev_b]
        gk = g[k]
        for i in range(m):
            logits[i] = row[i] + sigma * gk[i]
        _softmax_into(logits, w)
        yhat = 0.0
        pk = p[k]
        for i in range(m):
            yhat += w[i] * pk[i]
        raw, b, deg = error_state(y[k], yhat, n_buckets, eps_y, fallback_var)
        r = reward_value(prev_raw, raw, reward_kind)
        if k == k_steps - 1:
            delta = r - v[prev_b]
        else:
            delta = r + gamma * v[b] - v[prev_b]
        v[prev_b] += alpha_c * delta
        if actor_on:
            scale = alpha_a * delta / sigma
            for i in range(m):
                row[i] += scale * gk[i]
        raw_out[k + 1] = raw
        bucket_out[k + 1] = b
        degenerate_out[k + 1] = deg
        reward_out[k] = r
        wk = weights_out[k]
        for i in range(m):
            wk[i] = w[i]
        prev_raw, prev_b = raw, b

    theta[:, :] = th
    values[:] = v


def best_split(X, y, features, order, min_leaf):
    """Best variance-reduction split over the candidate ``features``.

    ``order`` is F x n: for each candidate feature, node row ids sorted by
    that feature. Returns ``(feature, position, threshold, score)``;
    ``feature`` is -1 when no split leaves ``min_leaf`` rows on both sides.
    ``score`` is the reduction in the sum of squared deviations.
    """
    n_feat, n = order.shape
    best = (-1, -1, 0.0, 0.0)
    if n < 2 * min_leaf:
        return best
    nl = np.arange(1, n, dtype=float)
    nr = n - nl
    for f in range(n_feat):
        rows = order[f]
        cs = np.cumsum(y[rows])
        total = cs[-1]
        ls = cs[:-1]
        rs = total - ls
        score = ls * ls / nl + rs * rs / nr - total * total / n
        xs = X[rows, features[f]]
        valid = xs[:-1] < xs[1:]
        valid[: min_leaf - 1] = False
        valid[n - min_leaf :] = False
        if not valid.any():
            continue
        score = np.where(valid, score, -np.inf)
        pos = int(np.argmax(score))
        if score[pos] > best[3]:
            lo, hi = xs[pos], xs[pos + 1]
            thr = 0.5 * (lo + hi)
            if not lo <= thr < hi:
                thr = lo
            best = (int(features[f]), pos, float(thr), float(score[pos]))
    return best
