from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Any, ClassVar, Sequence

import numpy as np

from ..errors import ContractError, TrainingError, ValidationError

KINDS = ("ar-least-squares", "feedforward-net", "recurrent-net", "bagged-trees")
DEFAULT_LAG_ORDER = 5


def sub_rng(seed: int, name: str) -> np.random.Generator:
    """Generator for one named stochastic step, derived from a run seed."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode("utf-8"))])


@dataclass(frozen=True)
class ForecasterSpec:
    kind: str
    lag_order: int = DEFAULT_LAG_ORDER
    hyperparams: dict = field(default_factory=dict)
    seed: int = 0
    name: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown forecaster kind {self.kind!r}; expected one of {KINDS}")
        if not isinstance(self.lag_order, (int, np.integer)) or self.lag_order < 1:
            raise ValidationError(f"lag_order must be a positive integer, got {self.lag_order!r}")
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ValidationError(f"seed must be a non-negative integer, got {self.seed!r}")
        from . import registry

        merged = registry.validate_hyperparams(self.kind, self.hyperparams, self.lag_order)
        object.__setattr__(self, "hyperparams", merged)

    @property
    def label(self) -> str:
        return self.name or self.kind

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "lag_order": int(self.lag_order),
            "hyperparams": _jsonable(self.hyperparams),
            "seed": int(self.seed),
            "name": self.name,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForecasterSpec":
        extra = set(d) - {"kind", "lag_order", "hyperparams", "seed", "name"}
        if extra:
            raise ValidationError(f"unknown forecaster spec keys {sorted(extra)}")
        if "kind" not in d:
            raise ValidationError("forecaster spec needs a 'kind'")
        return cls(
            kind=d["kind"],
            lag_order=d.get("lag_order", DEFAULT_LAG_ORDER),
            hyperparams=dict(d.get("hyperparams", {})),
            seed=d.get("seed", 0),
            name=d.get("name"),
        )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


class Forecaster:
    """A trained one-step-ahead model. Immutable after ``fit``."""

    kind: ClassVar[str] = ""

    def __init__(self, spec: ForecasterSpec):
        self.spec = spec

    @property
    def lag_order(self) -> int:
        return self.spec.lag_order

    @property
    def name(self) -> str:
        return self.spec.label

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        """Predictions for rows of lag windows (oldest to newest)."""
        raise NotImplementedError

    def predict_in_sample(self, X: np.ndarray) -> np.ndarray:
        """Predictions for training windows; models with an honest in-sample estimate override this."""
        return self.predict_batch(X)

    def predict_next(self, history: Sequence[float]) -> float:
        h = np.asarray(history, dtype=float).reshape(-1)
        if h.size != self.lag_order:
            raise ContractError(
                f"{self.name}: history has {h.size} values, lag order is {self.lag_order}"
            )
        if not np.isfinite(h).all():
            raise ContractError(f"{self.name}: history contains non-finite values")
        return float(self.predict_batch(h[None, :])[0])

    def params_to_dict(self) -> dict[str, Any]:
        raise NotImplementedError

    @classmethod
    def from_params(cls, spec: ForecasterSpec, params: dict[str, Any]) -> "Forecaster":
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}(name={self.name!r}, lag_order={self.lag_order})"


def lag_windows(segments: Sequence[np.ndarray], lag_order: int) -> tuple[np.ndarray, np.ndarray]:
    """Stack (window, next value) pairs per segment; no window crosses a boundary."""
    xs, ys = [], []
    for seg in segments:
        seg = np.asarray(seg, dtype=float)
        if not np.isfinite(seg).all():
            raise ContractError("training segment contains non-finite values")
        if seg.size <= lag_order:
            continue
        win = np.lib.stride_tricks.sliding_window_view(seg, lag_order + 1)
        xs.append(win[:, :lag_order])
        ys.append(win[:, lag_order])
    if not xs:
        return np.zeros((0, lag_order)), np.zeros(0)
    return np.ascontiguousarray(np.concatenate(xs)), np.concatenate(ys)


@dataclass(frozen=True)
class Scaler:
    mean: float
    scale: float

    @classmethod
    def fit(cls, values: np.ndarray) -> "Scaler":
        mean = float(np.mean(values))
        sd = float(np.std(values))
        return cls(mean, sd if sd > 1e-12 else 1.0)

    def forward(self, x):
        return (x - self.mean) / self.scale

    def inverse(self, z):
        return z * self.scale + self.mean


def check_finite_loss(loss: float, name: str, epoch: int) -> None:
    if not np.isfinite(loss):
        raise TrainingError(f"{name}: training loss became non-finite at epoch {epoch}")


class Adam:
    """Plain full-batch Adam over a flat parameter vector."""

    def __init__(self, size: int, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        params -= self.lr * mhat / (np.sqrt(vhat) + self.eps)
