"""Comparison strategies: an online neural weighter, optimised static weights,
uniform averaging and single-model selection."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .combiner import WeightVector, combine, softmax
from .errors import ArtifactError, ContractError, NumericError, OptimizationError, ValidationError
from .forecasters import ForecastPanel
from .forecasters.base import sub_rng

NN_FORMAT = "rlensemble.online-nn/1"
HIDDEN = 4
TEST_MODES = ("frozen-network", "fixed-weights")


def nn_param_count(m: int) -> int:
    return m * HIDDEN + HIDDEN + HIDDEN * HIDDEN + HIDDEN + HIDDEN * m + m


def _unpack(theta: np.ndarray, m: int):
    h = HIDDEN
    sizes = [(h, m), (h,), (h, h), (h,), (m, h), (m,)]
    out, k = [], 0
    for s in sizes:
        n = int(np.prod(s))
        out.append(theta[k : k + n].reshape(s))
        k += n
    return out


@dataclass(frozen=True)
class OnlineNNWeighter:
    """M -> 4 -> 4 -> M tanh network whose softmax output weights the models.

    Inputs are standardised with ``(preds - input_mean) / input_scale`` and the
    squared error is divided by ``input_scale**2``; with mean 0 and scale 1
    the network sees raw predictions and raw squared error.
    """

    params: np.ndarray
    n_models: int
    learning_rate: float = 0.01
    seed: int = 0
    input_mean: float = 0.0
    input_scale: float = 1.0
    steps_done: int = 0

    def __post_init__(self):
        p = np.array(self.params, dtype=float).reshape(-1)
        if self.n_models < 2:
            raise ValidationError("the online weighter needs at least two models")
        if p.size != nn_param_count(self.n_models):
            raise ValidationError(f"expected {nn_param_count(self.n_models)} parameters, got {p.size}")
        if not np.isfinite(p).all():
            raise ValidationError("weighter parameters must be finite")
        if not self.learning_rate >= 0:
            raise ValidationError("learning_rate must be >= 0")
        if not (np.isfinite(self.input_scale) and self.input_scale > 0 and np.isfinite(self.input_mean)):
            raise ValidationError("input scaling must be finite with a positive scale")
        p.setflags(write=False)
        object.__setattr__(self, "params", p)

    @classmethod
    def initial(cls, n_models: int, learning_rate: float = 0.01, seed: int = 0,
                input_mean: float = 0.0, input_scale: float = 1.0, init_range: float = 0.1) -> "OnlineNNWeighter":
        rng = sub_rng(seed, "online-nn/init")
        theta = rng.uniform(-init_range, init_range, nn_param_count(n_models))
        return cls(theta, n_models, learning_rate, seed, input_mean, input_scale)

    def to_dict(self) -> dict:
        return {
            "format": NN_FORMAT,
            "n_models": self.n_models,
            "layers": [self.n_models, HIDDEN, HIDDEN, self.n_models],
            "params": self.params.tolist(),
            "learning_rate": self.learning_rate,
            "seed": self.seed,
            "input_mean": self.input_mean,
            "input_scale": self.input_scale,
            "steps_done": self.steps_done,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OnlineNNWeighter":
        if d.get("format") != NN_FORMAT:
            raise ArtifactError(f"not an online-NN file (format={d.get('format')!r})")
        return cls(np.array(d["params"], dtype=float), int(d["n_models"]), float(d["learning_rate"]),
                   int(d["seed"]), float(d["input_mean"]), float(d["input_scale"]), int(d["steps_done"]))

    def save(self, path) -> None:
        _write_json(path, self.to_dict())

    @classmethod
    def load(cls, path) -> "OnlineNNWeighter":
        return cls.from_dict(_read_json(path))


def nn_forward(theta: np.ndarray, x: np.ndarray, m: int):
    W1, b1, W2, b2, W3, b3 = _unpack(theta, m)
    h1 = np.tanh(W1 @ x + b1)
    h2 = np.tanh(W2 @ h1 + b2)
    z = W3 @ h2 + b3
    return softmax(z), (x, h1, h2)


def nn_loss_and_grad(theta: np.ndarray, preds: np.ndarray, truth: float, m: int,
                     input_mean: float = 0.0, input_scale: float = 1.0):
    """Scaled squared error of the weighted combination and its gradient."""
    p = np.asarray(preds, dtype=float)
    x = (p - input_mean) / input_scale
    w, (x, h1, h2) = nn_forward(theta, x, m)
    W1, b1, W2, b2, W3, b3 = _unpack(theta, m)
    err = (truth - float(w @ p)) / input_scale
    loss = err * err
    gw = -2.0 * err / input_scale * p
    gz = w * (gw - float(w @ gw))
    gW3 = np.outer(gz, h2)
    gh2 = W3.T @ gz
    ga2 = gh2 * (1.0 - h2 * h2)
    gW2 = np.outer(ga2, h1)
    gh1 = W2.T @ ga2
    ga1 = gh1 * (1.0 - h1 * h1)
    gW1 = np.outer(ga1, x)
    grad = np.concatenate([gW1.ravel(), ga1, gW2.ravel(), ga2, gW3.ravel(), gz])
    return loss, grad


def nn_infer(weighter: OnlineNNWeighter, preds: Sequence[float]) -> WeightVector:
    p = np.asarray(preds, dtype=float).reshape(-1)
    if p.size != weighter.n_models or not np.isfinite(p).all():
        raise ContractError(f"need {weighter.n_models} finite predictions")
    w, _ = nn_forward(weighter.params, (p - weighter.input_mean) / weighter.input_scale, weighter.n_models)
    return WeightVector(w)


def nn_step(weighter: OnlineNNWeighter, preds: Sequence[float], truth: float) -> tuple[WeightVector, OnlineNNWeighter]:
    """Weights for this sample, then one gradient step on its squared error.

    The returned weights are the ones computed before the update. A
    non-finite loss or parameter raises :class:`NumericError` and leaves the
    input weighter untouched.
    """
    w = nn_infer(weighter, preds)
    if weighter.learning_rate == 0:
        return w, weighter
    with np.errstate(over="ignore", invalid="ignore"):
        loss, grad = nn_loss_and_grad(weighter.params, np.asarray(preds, dtype=float), float(truth),
                                      weighter.n_models, weighter.input_mean, weighter.input_scale)
        new = weighter.params - weighter.learning_rate * grad
    if not (np.isfinite(loss) and np.isfinite(new).all()):
        raise NumericError(f"online-NN step {weighter.steps_done}: non-finite loss or update; parameters rolled back")
    return w, replace(weighter, params=new, steps_done=weighter.steps_done + 1)


def nn_train(weighter: OnlineNNWeighter, panel: ForecastPanel, truth: Sequence[float]):
    """One online pass over the panel columns in order; returns the weighter and the weights used."""
    y = np.asarray(truth, dtype=float)
    if y.size != len(panel):
        raise ContractError("truth is not aligned with the panel")
    used = np.empty((len(panel), panel.n_models))
    for k in range(len(panel)):
        w, weighter = nn_step(weighter, panel.predictions[:, k], y[k])
        used[k] = w.weights
    return weighter, used


def nn_predict(weighter: OnlineNNWeighter, panel: ForecastPanel, mode: str = "frozen-network",
               fixed: WeightVector | None = None):
    """Test-time predictions without updates: per-sample network weights, or one fixed vector."""
    if mode not in TEST_MODES:
        raise ValidationError(f"online-NN test mode must be one of {TEST_MODES}")
    preds, weights = np.empty(len(panel)), np.empty((len(panel), panel.n_models))
    for k in range(len(panel)):
        col = panel.predictions[:, k]
        if mode == "frozen-network":
            w = nn_infer(weighter, col)
        else:
            if fixed is None:
                raise ValidationError("fixed-weights mode needs the final training weights")
            w = fixed
        weights[k] = w.weights
        preds[k] = combine(w, col)
    return preds, weights


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / ks > 0)[0][-1]
    tau = css[rho] / (rho + 1.0)
    w = np.maximum(v - tau, 0.0)
    return w / w.sum()


def static_objective(panel: ForecastPanel, truth: Sequence[float], weights) -> float:
    """Sum of squared errors of one weight vector held fixed over the panel."""
    y = np.asarray(truth, dtype=float)
    w = np.asarray(weights, dtype=float)
    r = y - w @ panel.predictions
    return float(r @ r)


def _polish(Q, c, w, floor: float = 1e-10):
    """Equality-constrained least squares on the support of ``w``; None if it leaves the simplex."""
    support = np.flatnonzero(w > floor)
    k = support.size
    A = np.zeros((k + 1, k + 1))
    A[:k, :k] = 2.0 * Q[np.ix_(support, support)]
    A[:k, k] = A[k, :k] = 1.0
    b = np.append(2.0 * c[support], 1.0)
    sol = np.linalg.lstsq(A, b, rcond=None)[0]
    if not np.isfinite(sol).all() or (sol[:k] < 0).any():
        return None
    out = np.zeros_like(w)
    out[support] = sol[:k]
    return project_simplex(out)


def fit_static_weights(panel: ForecastPanel, truth: Sequence[float], tol: float = 1e-8,
                       max_iter: int = 200_000) -> WeightVector:
    """Least-squares weights on the simplex by accelerated projected gradient.

    Stops when the gradient mapping of the objective normalised by ``sum(y^2)``
    has norm below ``tol``.
    """
    y = np.asarray(truth, dtype=float).reshape(-1)
    P = panel.predictions
    m = panel.n_models
    if y.size != P.shape[1]:
        raise ContractError("truth is not aligned with the panel")
    if y.size < m:
        raise ContractError(f"need at least {m} samples to fit {m} weights")
    if not np.isfinite(y).all():
        raise ContractError("truth contains non-finite values")
    norm = float(y @ y) or 1.0
    Q = (P @ P.T) / norm
    c = (P @ y) / norm
    L = 2.0 * float(np.linalg.eigvalsh(Q)[-1])
    if L <= 0:
        return WeightVector.uniform(m)

    def f(w):
        return float(w @ Q @ w - 2.0 * c @ w)

    def grad(w):
        return 2.0 * (Q @ w - c)

    def gmap(w):
        return L * np.linalg.norm(w - project_simplex(w - grad(w) / L))

    w = np.full(m, 1.0 / m)
    z, t = w.copy(), 1.0
    best_w, best_f = w.copy(), f(w)
    for it in range(max_iter):
        if it % 200 == 199:
            # ill-conditioned panels converge slowly; try the exact solution on the current support
            cand = _polish(Q, c, w)
            if cand is not None and f(cand) <= f(w) + 1e-15 and gmap(cand) < tol:
                return WeightVector(cand)
        w_next = project_simplex(z - grad(z) / L)
        fw = f(w_next)
        if fw < best_f:
            best_w, best_f = w_next.copy(), fw
        if fw > f(w):
            # adaptive restart keeps the iteration monotone
            z, t = w.copy(), 1.0
            continue
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = w_next + ((t - 1.0) / t_next) * (w_next - w)
        w, t = w_next, t_next
        if gmap(w) < tol:
            return WeightVector(project_simplex(w))
    raise OptimizationError(
        f"static weights did not converge in {max_iter} iterations",
        best_weights=project_simplex(best_w),
        best_objective=best_f * norm + float(y @ y),
    )


def save_weights(weights: WeightVector, path, model_names: Sequence[str] = ()) -> None:
    _write_json(path, {"format": "rlensemble.weights/1", "weights": list(weights), "models": list(model_names)})


def load_weights(path) -> WeightVector:
    d = _read_json(path)
    if d.get("format") != "rlensemble.weights/1":
        raise ArtifactError(f"{path} is not a weights file")
    return WeightVector(d["weights"])


def uniform_predictions(panel: ForecastPanel) -> np.ndarray:
    w = WeightVector.uniform(panel.n_models)
    return np.array([combine(w, panel.predictions[:, k]) for k in range(len(panel))])


def fixed_predictions(panel: ForecastPanel, weights: WeightVector) -> np.ndarray:
    return np.array([combine(weights, panel.predictions[:, k]) for k in range(len(panel))])


def single_model_predictions(panel: ForecastPanel, name: str) -> np.ndarray:
    if name not in panel.model_names:
        raise ValidationError(f"no model named {name!r}; have {list(panel.model_names)}")
    return panel.row(name).copy()


def _write_json(path, obj) -> None:
    try:
        Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True), encoding="utf-8")
    except OSError as exc:
        raise ArtifactError(f"cannot write {path}: {exc}") from exc


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ArtifactError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{path} is not valid JSON: {exc}") from exc
