"""Base forecasters behind one interface, plus the aligned prediction panel."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import ArtifactError, TrainingError, ValidationError
from ..series import SplitPlan, TimeSeries
from .base import KINDS, Forecaster, ForecasterSpec, lag_windows, sub_rng
from .panel import EnsembleFedHistory, ForecastPanel, build_panel
from .registry import forecaster_class

MODEL_FORMAT = "rlensemble.forecaster/1"

__all__ = [
    "KINDS",
    "EnsembleFedHistory",
    "ForecastPanel",
    "Forecaster",
    "ForecasterSpec",
    "build_panel",
    "default_specs",
    "fit",
    "fit_all",
    "load_model",
    "predict_next",
    "save_model",
    "sub_rng",
    "train_segments",
]


def train_segments(series: TimeSeries, plan: SplitPlan) -> list[np.ndarray]:
    return [series.values[series.pos(a) : series.pos(b) + 1] for a, b in plan.train_segments]


def fit(spec: ForecasterSpec, segments: Sequence[np.ndarray]) -> Forecaster:
    """Train one forecaster on all segments jointly; lag windows stay inside segments."""
    segments = [np.asarray(s, dtype=float) for s in segments]
    total = sum(s.size for s in segments)
    if total <= spec.lag_order + 1:
        raise TrainingError(f"{spec.label}: {total} training samples for lag order {spec.lag_order}")
    if spec.kind == "recurrent-net":
        shortest = min(s.size for s in segments)
        if spec.hyperparams["bptt_window"] > shortest:
            raise ValidationError(
                f"{spec.label}: bptt_window {spec.hyperparams['bptt_window']} exceeds segment length {shortest}"
            )
    X, y = lag_windows(segments, spec.lag_order)
    if y.size < 2:
        raise TrainingError(f"{spec.label}: no segment is longer than the lag order")
    return forecaster_class(spec.kind).fit_windows(spec, X, y)


def fit_all(specs: Sequence[ForecasterSpec], segments: Sequence[np.ndarray]) -> list[Forecaster]:
    return [fit(s, segments) for s in specs]


def predict_next(model: Forecaster, history: Sequence[float]) -> float:
    return model.predict_next(history)


def default_specs(seed: int = 0, lag_order: int = 5) -> list[ForecasterSpec]:
    """The four-model ensemble: linear AR, feedforward net, recurrent net, bagged trees."""
    return [
        ForecasterSpec("ar-least-squares", lag_order, {}, seed, "linear"),
        ForecasterSpec("feedforward-net", lag_order, {}, seed, "ann"),
        ForecasterSpec("recurrent-net", lag_order, {}, seed, "rnn"),
        ForecasterSpec("bagged-trees", lag_order, {}, seed, "forest"),
    ]


def model_to_dict(model: Forecaster) -> dict:
    return {"format": MODEL_FORMAT, "spec": model.spec.to_dict(), "params": model.params_to_dict()}


def model_from_dict(d: dict) -> Forecaster:
    if d.get("format") != MODEL_FORMAT:
        raise ArtifactError(f"not a forecaster file (format={d.get('format')!r})")
    spec = ForecasterSpec.from_dict(d["spec"])
    return forecaster_class(spec.kind).from_params(spec, d["params"])


def save_model(model: Forecaster, path) -> None:
    try:
        Path(path).write_text(json.dumps(model_to_dict(model), indent=1, sort_keys=True), encoding="utf-8")
    except OSError as exc:
        raise ArtifactError(f"cannot write {path}: {exc}") from exc


def load_model(path) -> Forecaster:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ArtifactError(f"cannot read model file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"model file {path} is not valid JSON: {exc}") from exc
    return model_from_dict(d)
