from __future__ import annotations

import numpy as np

from ..errors import TrainingError
from .base import Forecaster, ForecasterSpec


class ARForecaster(Forecaster):
    """Linear autoregression on the last L values, fitted by least squares.

    ``coefficients[j]`` multiplies the value j+1 steps back, so for L=2 the
    model reads ``y[t] = c0*y[t-1] + c1*y[t-2] + intercept``.
    """

    kind = "ar-least-squares"

    def __init__(self, spec: ForecasterSpec, coefficients: np.ndarray, intercept: float):
        super().__init__(spec)
        self.coefficients = np.asarray(coefficients, dtype=float)
        self.intercept = float(intercept)
        # windows arrive oldest -> newest
        self._w = self.coefficients[::-1].copy()

    @classmethod
    def fit_windows(cls, spec: ForecasterSpec, X: np.ndarray, y: np.ndarray) -> "ARForecaster":
        hp = spec.hyperparams
        A = X[:, ::-1]
        if hp["intercept"]:
            A = np.column_stack([A, np.ones(len(A))])
        if hp["ridge"] > 0:
            k = A.shape[1]
            reg = np.sqrt(hp["ridge"]) * np.eye(k)
            if hp["intercept"]:
                reg[-1, -1] = 0.0
            A = np.vstack([A, reg])
            y = np.concatenate([y, np.zeros(k)])
        beta, *_ = np.linalg.lstsq(A, y, rcond=None)
        if not np.isfinite(beta).all():
            raise TrainingError(f"{spec.label}: least-squares solution is not finite")
        coef = beta[: spec.lag_order]
        icpt = beta[-1] if hp["intercept"] else 0.0
        return cls(spec, coef, icpt)

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return X @ self._w + self.intercept

    def params_to_dict(self) -> dict:
        return {"coefficients": self.coefficients.tolist(), "intercept": self.intercept}

    @classmethod
    def from_params(cls, spec, params):
        return cls(spec, np.asarray(params["coefficients"], dtype=float), params["intercept"])
