"""Hyperparameter defaults, validation, and the kind -> class table."""

from __future__ import annotations

from ..errors import ValidationError

DEFAULTS = {
    "ar-least-squares": {"intercept": True, "ridge": 0.0},
    "feedforward-net": {"hidden": [8, 8], "learning_rate": 0.01, "epochs": 400},
    "recurrent-net": {"hidden": 8, "learning_rate": 0.01, "epochs": 300, "bptt_window": None},
    "bagged-trees": {
        "n_trees": 20,
        "max_depth": 6,
        "min_samples_leaf": 5,
        "max_features": None,
        "bootstrap": True,
    },
}


def _int(hp, key, lo, hi=None):
    v = hp[key]
    if isinstance(v, bool) or not isinstance(v, int) or v < lo or (hi is not None and v > hi):
        bound = f"[{lo}, {hi}]" if hi is not None else f">= {lo}"
        raise ValidationError(f"hyperparameter {key}={v!r} must be an integer {bound}")


def _pos_float(hp, key):
    v = hp[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
        raise ValidationError(f"hyperparameter {key}={v!r} must be a positive number")


def validate_hyperparams(kind: str, hyperparams: dict, lag_order: int) -> dict:
    defaults = DEFAULTS[kind]
    unknown = set(hyperparams) - set(defaults)
    if unknown:
        raise ValidationError(f"unknown hyperparameters for {kind}: {sorted(unknown)}")
    hp = {**defaults, **hyperparams}
    if kind == "ar-least-squares":
        if not isinstance(hp["intercept"], bool):
            raise ValidationError("intercept must be a boolean")
        if not isinstance(hp["ridge"], (int, float)) or hp["ridge"] < 0:
            raise ValidationError("ridge must be >= 0")
    elif kind == "feedforward-net":
        hidden = hp["hidden"]
        if not isinstance(hidden, (list, tuple)) or len(hidden) != 2:
            raise ValidationError("feedforward-net needs exactly two hidden layer sizes")
        if any(isinstance(h, bool) or not isinstance(h, int) or not 1 <= h <= 256 for h in hidden):
            raise ValidationError("hidden sizes must be integers in [1, 256]")
        hp["hidden"] = [int(h) for h in hidden]
        _pos_float(hp, "learning_rate")
        _int(hp, "epochs", 0)
    elif kind == "recurrent-net":
        _int(hp, "hidden", 1, 8)
        _pos_float(hp, "learning_rate")
        _int(hp, "epochs", 0)
        if hp["bptt_window"] is None:
            hp["bptt_window"] = lag_order
        _int(hp, "bptt_window", 1)
    elif kind == "bagged-trees":
        _int(hp, "n_trees", 1)
        _int(hp, "max_depth", 0, 32)
        _int(hp, "min_samples_leaf", 1)
        if hp["max_features"] is not None:
            _int(hp, "max_features", 1, lag_order)
        if not isinstance(hp["bootstrap"], bool):
            raise ValidationError("bootstrap must be a boolean")
    return hp


def forecaster_class(kind: str):
    from .ar import ARForecaster
    from .gru import GRUForecaster
    from .mlp import MLPForecaster
    from .trees import BaggedTreesForecaster

    return {
        "ar-least-squares": ARForecaster,
        "feedforward-net": MLPForecaster,
        "recurrent-net": GRUForecaster,
        "bagged-trees": BaggedTreesForecaster,
    }[kind]
