"""Weight vectors on the probability simplex and the linear combination rule."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ContractError

SIMPLEX_TOL = 1e-9


class WeightVector:
    """M nonnegative weights summing to one. Immutable."""

    __slots__ = ("_w",)

    def __init__(self, weights: Sequence[float]):
        w = np.array(weights, dtype=float).reshape(-1)
        if w.size == 0:
            raise ContractError("weight vector is empty")
        if not np.isfinite(w).all():
            raise ContractError("weights must be finite")
        if (w < 0).any() or (w > 1).any() or abs(w.sum() - 1.0) > SIMPLEX_TOL:
            raise ContractError(f"weights {w.tolist()} are not on the simplex")
        w.setflags(write=False)
        self._w = w

    @property
    def weights(self) -> np.ndarray:
        return self._w

    def __len__(self) -> int:
        return self._w.size

    def __iter__(self):
        return iter(self._w.tolist())

    def __array__(self, dtype=None, copy=None):
        return self._w if dtype is None else self._w.astype(dtype)

    def __repr__(self) -> str:
        return f"WeightVector({self._w.tolist()})"

    def __eq__(self, other) -> bool:
        return isinstance(other, WeightVector) and np.array_equal(self._w, other._w)

    @classmethod
    def uniform(cls, m: int) -> "WeightVector":
        return cls(np.full(m, 1.0 / m))

    @classmethod
    def one_hot(cls, m: int, i: int) -> "WeightVector":
        w = np.zeros(m)
        w[i] = 1.0
        return cls(w)


def is_on_simplex(w, tol: float = SIMPLEX_TOL) -> bool:
    w = np.asarray(w, dtype=float)
    return bool(np.isfinite(w).all() and (w >= 0).all() and (w <= 1).all() and abs(w.sum() - 1.0) <= tol)


def softmax(logits) -> np.ndarray:
    """Max-shifted softmax followed by one renormalisation pass."""
    z = np.asarray(logits, dtype=float)
    e = np.exp(z - z.max())
    w = e / e.sum()
    return w / w.sum()


def from_logits(logits: Sequence[float]) -> WeightVector:
    z = np.asarray(logits, dtype=float).reshape(-1)
    if z.size == 0 or not np.isfinite(z).all():
        raise ContractError("logits must be a non-empty finite vector")
    return WeightVector(softmax(z))


def combine(weights, column: Sequence[float]) -> float:
    """Weighted sum of M model predictions for one time step."""
    w = np.asarray(weights, dtype=float).reshape(-1)
    p = np.asarray(column, dtype=float).reshape(-1)
    if w.size != p.size:
        raise ContractError(f"{w.size} weights for {p.size} predictions")
    if not np.isfinite(p).all():
        raise ContractError("predictions must be finite")
    total = 0.0
    for wi, pi in zip(w.tolist(), p.tolist()):
        total += wi * pi
    return total
