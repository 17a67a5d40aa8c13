"""Single-layer gated recurrent forecaster.

The state is reset to zero for every lag window, the cell is unrolled over
the window, and a linear readout of the final state gives the prediction.
Training backpropagates through at most ``bptt_window`` trailing steps.
"""

from __future__ import annotations

import numpy as np

from .base import Adam, Forecaster, ForecasterSpec, Scaler, check_finite_loss, sub_rng

_NAMES = ("Wz", "Wr", "Wn", "Uz", "Ur", "Un", "bz", "br", "bn", "bhn", "wo", "bo")


def n_params(hidden: int) -> int:
    return 3 * hidden + 3 * hidden * hidden + 4 * hidden + hidden + 1


def unpack(theta: np.ndarray, hidden: int) -> dict[str, np.ndarray]:
    H = hidden
    shapes = {
        "Wz": (H,), "Wr": (H,), "Wn": (H,),
        "Uz": (H, H), "Ur": (H, H), "Un": (H, H),
        "bz": (H,), "br": (H,), "bn": (H,), "bhn": (H,),
        "wo": (H,), "bo": (),
    }
    out, i = {}, 0
    for name in _NAMES:
        n = int(np.prod(shapes[name], dtype=int))
        out[name] = theta[i : i + n].reshape(shapes[name])
        i += n
    return out


def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def forward(theta, X, hidden, keep=False):
    p = unpack(theta, hidden)
    B, T = X.shape
    h = np.zeros((B, hidden))
    cache = []
    for t in range(T):
        x = X[:, t : t + 1]
        z = _sigmoid(x * p["Wz"] + h @ p["Uz"].T + p["bz"])
        r = _sigmoid(x * p["Wr"] + h @ p["Ur"].T + p["br"])
        hn = h @ p["Un"].T + p["bhn"]
        n = np.tanh(x * p["Wn"] + p["bn"] + r * hn)
        h_new = (1.0 - z) * n + z * h
        if keep:
            cache.append((x, h, z, r, hn, n))
        h = h_new
    return h @ p["wo"] + p["bo"], h, cache


def loss_and_grad(theta, X, y, hidden, bptt_window=None):
    """Half mean squared error and its (truncated) gradient."""
    p = unpack(theta, hidden)
    B, T = X.shape
    k = T if bptt_window is None else min(int(bptt_window), T)
    out, h_last, cache = forward(theta, X, hidden, keep=True)
    r_out = out - y
    loss = 0.5 * float(r_out @ r_out) / B
    d_out = r_out / B
    g = {name: np.zeros_like(v) for name, v in p.items()}
    g["wo"] = h_last.T @ d_out
    g["bo"] = np.asarray(d_out.sum())
    dh = np.outer(d_out, p["wo"])
    for t in range(T - 1, T - k - 1, -1):
        x, h, z, r, hn, n = cache[t]
        dz = dh * (h - n)
        dn = dh * (1.0 - z)
        dh_prev = dh * z
        da_n = dn * (1.0 - n * n)
        g["Wn"] += (da_n * x).sum(axis=0)
        g["bn"] += da_n.sum(axis=0)
        dr = da_n * hn
        dhn = da_n * r
        g["Un"] += dhn.T @ h
        g["bhn"] += dhn.sum(axis=0)
        dh_prev += dhn @ p["Un"]
        da_r = dr * r * (1.0 - r)
        g["Wr"] += (da_r * x).sum(axis=0)
        g["br"] += da_r.sum(axis=0)
        g["Ur"] += da_r.T @ h
        dh_prev += da_r @ p["Ur"]
        da_z = dz * z * (1.0 - z)
        g["Wz"] += (da_z * x).sum(axis=0)
        g["bz"] += da_z.sum(axis=0)
        g["Uz"] += da_z.T @ h
        dh_prev += da_z @ p["Uz"]
        dh = dh_prev
    grad = np.concatenate([np.ravel(g[name]) for name in _NAMES])
    return loss, grad


def init_params(rng: np.random.Generator, hidden: int) -> np.ndarray:
    H = hidden
    lim_in = np.sqrt(6.0 / (1 + H))
    lim_h = np.sqrt(6.0 / (2 * H))
    parts = {
        "Wz": rng.uniform(-lim_in, lim_in, H),
        "Wr": rng.uniform(-lim_in, lim_in, H),
        "Wn": rng.uniform(-lim_in, lim_in, H),
        "Uz": rng.uniform(-lim_h, lim_h, H * H),
        "Ur": rng.uniform(-lim_h, lim_h, H * H),
        "Un": rng.uniform(-lim_h, lim_h, H * H),
        "bz": np.zeros(H), "br": np.zeros(H), "bn": np.zeros(H), "bhn": np.zeros(H),
        "wo": rng.uniform(-lim_in, lim_in, H),
        "bo": np.zeros(1),
    }
    return np.concatenate([parts[name] for name in _NAMES])


class GRUForecaster(Forecaster):
    kind = "recurrent-net"

    def __init__(self, spec: ForecasterSpec, theta: np.ndarray, scaler: Scaler, final_loss: float | None = None):
        super().__init__(spec)
        self.theta = np.asarray(theta, dtype=float)
        self.scaler = scaler
        self.final_loss = final_loss
        self.hidden = spec.hyperparams["hidden"]

    @classmethod
    def fit_windows(cls, spec: ForecasterSpec, X: np.ndarray, y: np.ndarray) -> "GRUForecaster":
        hp = spec.hyperparams
        H = hp["hidden"]
        scaler = Scaler.fit(np.concatenate([X[0], y]))
        Xs, ys = scaler.forward(X), scaler.forward(y)
        theta = init_params(sub_rng(spec.seed, f"{spec.label}/init"), H)
        opt = Adam(theta.size, hp["learning_rate"])
        loss = None
        for epoch in range(hp["epochs"]):
            loss, grad = loss_and_grad(theta, Xs, ys, H, hp["bptt_window"])
            check_finite_loss(loss, spec.label, epoch)
            opt.step(theta, grad)
        if hp["epochs"]:
            out, _, _ = forward(theta, Xs, H)
            loss = 0.5 * float(np.mean((out - ys) ** 2))
            check_finite_loss(loss, spec.label, hp["epochs"])
        return cls(spec, theta, scaler, loss)

    def predict_batch(self, X):
        Xs = self.scaler.forward(np.asarray(X, dtype=float))
        out, _, _ = forward(self.theta, Xs, self.hidden)
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
