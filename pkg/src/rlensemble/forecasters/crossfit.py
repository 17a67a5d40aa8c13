"""Out-of-fold predictions on the training segments.

Each training segment is cut into ``folds`` contiguous chunks; fold k holds
chunk k of every segment. A model refitted without fold k (and without the
rows whose windows touch it) predicts fold k. The result shows how a model
does on data it has not seen, which is what the weighting strategies need
to learn from.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import TrainingError, ValidationError
from ..series import SplitPlan, TimeSeries
from .base import ForecasterSpec
from .registry import forecaster_class


def _rows(series: TimeSeries, plan: SplitPlan, lag: int, folds: int):
    """Windows, targets, target time indices, fold ids and segment ids of all training rows."""
    xs, ys, ts, fs, ss = [], [], [], [], []
    for k, (a, b) in enumerate(plan.train_segments):
        seg = series.values[series.pos(a) : series.pos(b) + 1]
        if seg.size <= lag:
            continue
        win = np.lib.stride_tricks.sliding_window_view(seg, lag + 1)
        n = win.shape[0]
        xs.append(win[:, :lag])
        ys.append(win[:, lag])
        ts.append(np.arange(a + lag, b + 1, dtype=np.int64))
        fs.append(np.arange(n) * folds // n)
        ss.append(np.full(n, k))
    if not xs:
        raise TrainingError("no training segment is longer than the lag order")
    return (np.ascontiguousarray(np.concatenate(xs)), np.concatenate(ys), np.concatenate(ts),
            np.concatenate(fs), np.concatenate(ss))


def cross_fit(specs: Sequence[ForecasterSpec], series: TimeSeries, plan: SplitPlan, folds: int = 3):
    """Out-of-fold predictions of every spec at every training target.

    Returns ``(time_indices, predictions)`` with predictions shaped models x rows.
    Rows whose lag window reaches into the held-out fold are left out of the
    refit as well, so no held-out value is seen as an input or a target.
    """
    if folds < 2:
        raise ValidationError("cross-fitting needs at least two folds")
    lags = {s.lag_order for s in specs}
    lmax = max(lags)
    _, _, t_ref, _, _ = _rows(series, plan, lmax, folds)
    out = np.empty((len(specs), t_ref.size))
    for i, spec in enumerate(specs):
        X, y, t, fold, seg = _rows(series, plan, spec.lag_order, folds)
        keep = np.isin(t, t_ref)
        cls = forecaster_class(spec.kind)
        pred = np.empty(t.size)
        for k in range(folds):
            held = fold == k
            # purge rows within lag_order of the held-out chunk in the same segment
            near = np.zeros(t.size, dtype=bool)
            for s in np.unique(seg[held]):
                in_seg = seg == s
                lo, hi = t[held & in_seg].min(), t[held & in_seg].max()
                near |= in_seg & (t >= lo - spec.lag_order) & (t <= hi + spec.lag_order)
            train = ~near
            if train.sum() < 2:
                raise TrainingError(f"{spec.label}: fold {k} leaves too few training rows")
            model = cls.fit_windows(spec, X[train], y[train])
            pred[held] = model.predict_batch(X[held])
        out[i] = pred[keep]
    return t_ref, out
