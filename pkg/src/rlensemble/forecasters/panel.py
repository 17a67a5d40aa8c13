from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ContractError
from ..series import TimeSeries
from .base import Forecaster


@dataclass(frozen=True)
class ForecastPanel:
    predictions: np.ndarray  # M x T
    model_names: tuple[str, ...]
    time_indices: np.ndarray

    def __post_init__(self):
        p = np.array(self.predictions, dtype=float)
        idx = np.array(self.time_indices, dtype=np.int64).reshape(-1)
        names = tuple(self.model_names)
        if p.ndim != 2 or p.shape != (len(names), idx.size):
            raise ContractError(f"panel shape {p.shape} does not match {len(names)} models x {idx.size} indices")
        if len(names) < 2:
            raise ContractError("a panel needs at least two models")
        if not np.isfinite(p).all():
            raise ContractError("panel contains non-finite predictions")
        if idx.size > 1 and not (np.diff(idx) > 0).all():
            raise ContractError("panel time indices must be strictly increasing")
        p.setflags(write=False)
        idx.setflags(write=False)
        object.__setattr__(self, "predictions", p)
        object.__setattr__(self, "time_indices", idx)
        object.__setattr__(self, "model_names", names)
        object.__setattr__(self, "_pos", {int(t): k for k, t in enumerate(idx)})

    @property
    def n_models(self) -> int:
        return len(self.model_names)

    def __len__(self) -> int:
        return int(self.time_indices.size)

    def column(self, index: int) -> np.ndarray:
        try:
            return self.predictions[:, self._pos[int(index)]]
        except KeyError:
            raise ContractError(f"panel has no column for index {index}") from None

    def positions(self, indices) -> np.ndarray:
        try:
            return np.array([self._pos[int(t)] for t in indices], dtype=np.int64)
        except KeyError as exc:
            raise ContractError(f"panel has no column for index {exc.args[0]}") from None

    def select(self, indices) -> "ForecastPanel":
        pos = self.positions(indices)
        return ForecastPanel(self.predictions[:, pos], self.model_names, self.time_indices[pos])

    def row(self, name: str) -> np.ndarray:
        return self.predictions[self.model_names.index(name)]


def _rolled_values(model: Forecaster, series: TimeSeries, upto: int) -> np.ndarray:
    """Series values with missing positions up to ``upto`` replaced by the model's own rolling predictions."""
    L = model.lag_order
    fill = series.masked()
    s = series.start_index
    for a, b in series.missing_blocks:
        if a > upto:
            break
        for idx in range(a, min(b, upto) + 1):
            p = idx - s
            if p < L:
                continue
            window = fill[p - L : p]
            if np.isfinite(window).all():
                fill[p] = model.predict_next(window)
    return fill


def build_panel(models: Sequence[Forecaster], series: TimeSeries, indices, in_sample: bool = False) -> ForecastPanel:
    """One-step-ahead predictions of every model at every requested index.

    Lags inside missing blocks are filled per model with that model's own
    earlier predictions, rolled forward through the block. With
    ``in_sample=True``, windows the model was trained on use its in-sample
    estimate (out-of-bag averages for bagged trees) instead.
    """
    idx = np.asarray(list(indices), dtype=np.int64).reshape(-1)
    if idx.size == 0:
        raise ContractError("no indices requested")
    if idx.size > 1 and not (np.diff(idx) > 0).all():
        raise ContractError("indices must be strictly increasing")
    names = [m.name for m in models]
    if len(set(names)) != len(names):
        raise ContractError(f"model names must be unique, got {names}")
    s = series.start_index
    out = np.empty((len(models), idx.size))
    missing = series.missing_mask()
    for i, model in enumerate(models):
        L = model.lag_order
        pos = idx - s
        if pos.min() < L or idx.max() > series.end_index:
            bad = int(idx[np.argmax((pos < L) | (idx > series.end_index))])
            raise ContractError(f"{model.name}: index {bad} has fewer than {L} preceding values")
        fill = _rolled_values(model, series, int(idx.max()))
        windows = np.lib.stride_tricks.sliding_window_view(fill, L)[pos - L]
        bad_rows = ~np.isfinite(windows).all(axis=1)
        if bad_rows.any():
            raise ContractError(f"{model.name}: index {int(idx[bad_rows][0])} lacks a usable lag history")
        windows = np.ascontiguousarray(windows)
        preds = model.predict_in_sample(windows) if in_sample else model.predict_batch(windows)
        rolled = missing[pos]
        preds[rolled] = fill[pos[rolled]]
        out[i] = preds
    return ForecastPanel(out, tuple(names), idx)


class EnsembleFedHistory:
    """Shared lag history whose missing positions are filled by ensemble predictions.

    Used when the ensemble's own output, not each model's, should feed the
    lags inside a missing block.
    """

    def __init__(self, series: TimeSeries):
        self.series = series
        self.fill = series.masked()

    def predictions_at(self, models: Sequence[Forecaster], index: int) -> np.ndarray:
        p = self.series.pos(index)
        out = np.empty(len(models))
        for i, m in enumerate(models):
            L = m.lag_order
            if p < L:
                raise ContractError(f"{m.name}: index {index} has fewer than {L} preceding values")
            window = self.fill[p - L : p]
            if not np.isfinite(window).all():
                raise ContractError(f"{m.name}: index {index} lacks a usable lag history")
            out[i] = m.predict_next(window)
        return out

    def record(self, index: int, combined: float) -> None:
        p = self.series.pos(index)
        if np.isnan(self.fill[p]):
            self.fill[p] = combined
