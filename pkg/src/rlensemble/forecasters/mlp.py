from __future__ import annotations

import numpy as np

from .base import Adam, Forecaster, ForecasterSpec, Scaler, check_finite_loss, sub_rng


def n_params(n_in: int, h1: int, h2: int) -> int:
    return h1 * n_in + h1 + h2 * h1 + h2 + h2 + 1


def unpack(theta: np.ndarray, n_in: int, h1: int, h2: int):
    i = 0

    def take(n, shape):
        nonlocal i
        out = theta[i : i + n].reshape(shape)
        i += n
        return out

    W1 = take(h1 * n_in, (h1, n_in))
    b1 = take(h1, (h1,))
    W2 = take(h2 * h1, (h2, h1))
    b2 = take(h2, (h2,))
    w3 = take(h2, (h2,))
    b3 = theta[i]
    return W1, b1, W2, b2, w3, b3


def forward(theta, X, n_in, h1, h2):
    W1, b1, W2, b2, w3, b3 = unpack(theta, n_in, h1, h2)
    a1 = np.tanh(X @ W1.T + b1)
    a2 = np.tanh(a1 @ W2.T + b2)
    return a2 @ w3 + b3, (a1, a2)


def loss_and_grad(theta, X, y, n_in, h1, h2):
    """Half mean squared error and its gradient with respect to ``theta``."""
    W1, b1, W2, b2, w3, b3 = unpack(theta, n_in, h1, h2)
    out, (a1, a2) = forward(theta, X, n_in, h1, h2)
    n = len(y)
    r = out - y
    loss = 0.5 * float(r @ r) / n
    d_out = r / n
    g_w3 = a2.T @ d_out
    g_b3 = d_out.sum()
    d_a2 = np.outer(d_out, w3) * (1.0 - a2 * a2)
    g_W2 = d_a2.T @ a1
    g_b2 = d_a2.sum(axis=0)
    d_a1 = (d_a2 @ W2) * (1.0 - a1 * a1)
    g_W1 = d_a1.T @ X
    g_b1 = d_a1.sum(axis=0)
    grad = np.concatenate([g_W1.ravel(), g_b1, g_W2.ravel(), g_b2, g_w3, [g_b3]])
    return loss, grad


def init_params(rng: np.random.Generator, n_in: int, h1: int, h2: int) -> np.ndarray:
    def glorot(fan_out, fan_in):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=fan_out * fan_in)

    return np.concatenate([
        glorot(h1, n_in), np.zeros(h1),
        glorot(h2, h1), np.zeros(h2),
        glorot(1, h2), [0.0],
    ])


class MLPForecaster(Forecaster):
    """Two-hidden-layer tanh network on standardised lag windows."""

    kind = "feedforward-net"

    def __init__(self, spec: ForecasterSpec, theta: np.ndarray, scaler: Scaler, final_loss: float | None = None):
        super().__init__(spec)
        self.theta = np.asarray(theta, dtype=float)
        self.scaler = scaler
        self.final_loss = final_loss
        self.h1, self.h2 = spec.hyperparams["hidden"]

    @classmethod
    def fit_windows(cls, spec: ForecasterSpec, X: np.ndarray, y: np.ndarray) -> "MLPForecaster":
        hp = spec.hyperparams
        h1, h2 = hp["hidden"]
        L = spec.lag_order
        scaler = Scaler.fit(np.concatenate([X[0], y]))
        Xs, ys = scaler.forward(X), scaler.forward(y)
        theta = init_params(sub_rng(spec.seed, f"{spec.label}/init"), L, h1, h2)
        opt = Adam(theta.size, hp["learning_rate"])
        loss = None
        for epoch in range(hp["epochs"]):
            loss, grad = loss_and_grad(theta, Xs, ys, L, h1, h2)
            check_finite_loss(loss, spec.label, epoch)
            opt.step(theta, grad)
        if hp["epochs"]:
            loss, _ = loss_and_grad(theta, Xs, ys, L, h1, h2)
            check_finite_loss(loss, spec.label, hp["epochs"])
        return cls(spec, theta, scaler, loss)

    def predict_batch(self, X):
        Xs = self.scaler.forward(np.asarray(X, dtype=float))
        out, _ = forward(self.theta, Xs, self.lag_order, self.h1, self.h2)
        return self.scaler.inverse(out)

    def params_to_dict(self):
        return {
            "theta": self.theta.tolist(),
            "scaler": {"mean": self.scaler.mean, "scale": self.scaler.scale},
            "final_loss": self.final_loss,
        }

    @classmethod
    def from_params(cls, spec, params):
        sc = params["scaler"]
        return cls(spec, np.asarray(params["theta"]), Scaler(sc["mean"], sc["scale"]), params.get("final_loss"))
