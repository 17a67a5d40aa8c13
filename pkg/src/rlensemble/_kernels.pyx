# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: the actor-critic training episode and the tree split scan.

Semantics mirror ``_kernels_py`` exactly, including operation order.
"""

from libc.math cimport exp, floor, fabs, INFINITY

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef double REWARD_FLOOR = 0.01


cdef inline void _state(double y, double yhat, int n_buckets, double eps_y, double fallback_var,
                        double* raw, long* bucket, unsigned char* degenerate) noexcept nogil:
    cdef double err = y - yhat
    cdef double r
    cdef long b
    if fabs(y) < eps_y:
        r = err * err / fallback_var * 100.0
        degenerate[0] = 1
    else:
        r = err * err / (y * y) * 100.0
        degenerate[0] = 0
    if r < 0.0:
        r = 0.0
    elif r > 100.0:
        r = 100.0
    b = <long>floor(r / (100.0 / n_buckets))
    if b >= n_buckets:
        b = n_buckets - 1
    raw[0] = r
    bucket[0] = b


cdef inline double _reward(double prev_raw, double raw, int kind) noexcept nogil:
    cdef double d
    if kind == 0:
        return prev_raw - raw
    if kind == 1:
        d = fabs(raw)
    else:
        d = fabs(raw - prev_raw)
    if d < REWARD_FLOOR:
        d = REWARD_FLOOR
    return 1.0 / d


cdef inline void _softmax(double* z, double* out, Py_ssize_t m) noexcept nogil:
    cdef Py_ssize_t i
    cdef double zmax = z[0]
    cdef double s = 0.0
    cdef double s2 = 0.0
    for i in range(1, m):
        if z[i] > zmax:
            zmax = z[i]
    for i in range(m):
        out[i] = exp(z[i] - zmax)
        s += out[i]
    for i in range(m):
        out[i] = out[i] / s
        s2 += out[i]
    for i in range(m):
        out[i] = out[i] / s2


def run_episode(double[:, ::1] theta, double[::1] values, double[:, ::1] preds,
                double[::1] truth, double[:, ::1] noise, double sigma, double alpha_a,
                double alpha_c, double gamma, long init_bucket, double eps_y,
                double fallback_var, int reward_kind, double[::1] raw_out,
                long[::1] bucket_out, double[::1] reward_out, double[:, ::1] weights_out,
                unsigned char[::1] degenerate_out):
    cdef int n_buckets = theta.shape[0]
    cdef Py_ssize_t m = theta.shape[1]
    cdef Py_ssize_t k_steps = preds.shape[0]
    cdef Py_ssize_t k, i
    cdef double[::1] w = np.empty(m)
    cdef double[::1] logits = np.empty(m)
    cdef double yhat, raw, prev_raw, r, delta, scale
    cdef long b, prev_b
    cdef unsigned char deg
    cdef bint actor_on = sigma > 0.0 and alpha_a != 0.0

    with nogil:
        if init_bucket < 0:
            for i in range(m):
                w[i] = 1.0 / m
        else:
            _softmax(&theta[init_bucket, 0], &w[0], m)
        yhat = 0.0
        for i in range(m):
            yhat += w[i] * preds[0, i]
        _state(truth[0], yhat, n_buckets, eps_y, fallback_var, &prev_raw, &prev_b, &deg)
        raw_out[0] = prev_raw
        bucket_out[0] = prev_b
        degenerate_out[0] = deg

        for k in range(k_steps):
            for i in range(m):
                logits[i] = theta[prev_b, i] + sigma * noise[k, i]
            _softmax(&logits[0], &w[0], m)
            yhat = 0.0
            for i in range(m):
                yhat += w[i] * preds[k, i]
            _state(truth[k], yhat, n_buckets, eps_y, fallback_var, &raw, &b, &deg)
            r = _reward(prev_raw, raw, reward_kind)
            if k == k_steps - 1:
                delta = r - values[prev_b]
            else:
                delta = r + gamma * values[b] - values[prev_b]
            values[prev_b] += alpha_c * delta
            if actor_on:
                scale = alpha_a * delta / sigma
                for i in range(m):
                    theta[prev_b, i] += scale * noise[k, i]
            raw_out[k + 1] = raw
            bucket_out[k + 1] = b
            degenerate_out[k + 1] = deg
            reward_out[k] = r
            for i in range(m):
                weights_out[k, i] = w[i]
            prev_raw = raw
            prev_b = b


def best_split(double[:, ::1] X, double[::1] y, long[::1] features, long[:, ::1] order,
               Py_ssize_t min_leaf):
    cdef Py_ssize_t n_feat = order.shape[0]
    cdef Py_ssize_t n = order.shape[1]
    cdef Py_ssize_t f, i, col, best_pos = -1
    cdef long best_feat = -1
    cdef double best_score = 0.0, best_thr = 0.0
    cdef double total, ls, rs, nl, score, lo, hi, thr, f_score
    cdef Py_ssize_t f_pos
    if n < 2 * min_leaf:
        return (-1, -1, 0.0, 0.0)
    with nogil:
        for f in range(n_feat):
            col = features[f]
            total = 0.0
            for i in range(n):
                total += y[order[f, i]]
            # the running sum must reproduce np.cumsum, so total is the last prefix
            f_score = -INFINITY
            f_pos = -1
            ls = 0.0
            for i in range(n - 1):
                ls += y[order[f, i]]
                if i < min_leaf - 1 or i >= n - min_leaf:
                    continue
                if not X[order[f, i], col] < X[order[f, i + 1], col]:
                    continue
                nl = <double>(i + 1)
                rs = total - ls
                score = ls * ls / nl + rs * rs / (n - nl) - total * total / n
                if score > f_score:
                    f_score = score
                    f_pos = i
            if f_pos >= 0 and f_score > best_score:
                lo = X[order[f, f_pos], col]
                hi = X[order[f, f_pos + 1], col]
                thr = 0.5 * (lo + hi)
                if not (lo <= thr and thr < hi):
                    thr = lo
                best_feat = col
                best_pos = f_pos
                best_thr = thr
                best_score = f_score
    return (int(best_feat), int(best_pos), float(best_thr), float(best_score))
