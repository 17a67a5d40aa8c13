"""Error-state MDP and the tabular actor-critic weight controller.

State: squared relative error of the combined forecast, in percent, clamped
to [0, 100] and bucketed into ``n`` equal intervals. Action: a weight vector,
produced by a softmax over per-bucket logits plus Gaussian exploration noise.
Reward: drop in error state from one step to the next.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from ._kernels_py import error_state, reward_value
from .combiner import WeightVector, combine, from_logits, softmax
from .errors import ArtifactError, ContractError, DegenerateDenominatorError, ValidationError
from .forecasters import EnsembleFedHistory, Forecaster, ForecastPanel
from .series import SplitPlan, TimeSeries

POLICY_FORMAT = "rlensemble.policy/1"
REWARD_KINDS = {"difference": 0, "inverse-error": 1, "inverse-change": 2}
FEEDBACK_MODES = ("true-value", "proxy")
LAG_SOURCES = ("model", "ensemble")


@dataclass(frozen=True)
class ErrorState:
    raw: float
    bucket: int
    bucket_lb: float
    degenerate: bool = False

    @classmethod
    def from_raw(cls, raw: float, n: int, degenerate: bool = False) -> "ErrorState":
        raw = min(max(float(raw), 0.0), 100.0)
        b = bucket_of(raw, n)
        return cls(raw, b, b * (100.0 / n), degenerate)


def bucket_of(raw: float, n: int) -> int:
    """Lower-inclusive interval index of ``raw`` in [0, 100] split into ``n`` parts; 100 maps to n-1."""
    b = int(math.floor(raw / (100.0 / n)))
    return n - 1 if b >= n else b


def state_from_error(y: float, yhat: float, n: int, eps_y: float = 1e-8, fallback_var: float | None = None) -> ErrorState:
    if abs(y) < eps_y and fallback_var is None:
        raise DegenerateDenominatorError(f"|y|={abs(y):.3g} below {eps_y:g}; relative error undefined")
    raw, b, deg = error_state(y, yhat, n, eps_y, fallback_var if fallback_var else 1.0)
    return ErrorState(raw, b, b * (100.0 / n), deg)


def compute_state(true_value: float, weights, preds: Sequence[float], n: int,
                  eps_y: float = 1e-8, fallback_var: float | None = None) -> ErrorState:
    """Clamped percent squared relative error of the weighted combination.

    When ``|true_value| < eps_y`` the squared error is scaled by
    ``fallback_var`` instead (flagged ``degenerate``); without a fallback this
    raises :class:`DegenerateDenominatorError`.
    """
    if n < 1:
        raise ValidationError("bucket count must be >= 1")
    return state_from_error(float(true_value), combine(weights, preds), n, eps_y, fallback_var)


def compute_reward(prev: ErrorState, curr: ErrorState, kind: str = "difference") -> float:
    return reward_value(prev.raw, curr.raw, REWARD_KINDS[kind])


def compute_return(rewards: Sequence[float], discount: float) -> float:
    """Discounted sum ``r0 + g*r1 + g^2*r2 + ...`` over the given horizon."""
    if not 0.0 <= discount <= 1.0:
        raise ValidationError(f"discount must be in [0, 1], got {discount}")
    g = 0.0
    for r in reversed(list(rewards)):
        g = float(r) + discount * g
    return g


@dataclass
class RLConfig:
    n_buckets: int = 10
    gamma: float = 0.9
    actor_lr: float = 0.05
    critic_lr: float = 0.1
    sigma0: float = 0.5
    sigma_decay: float = 0.97
    sigma_min: float = 0.0
    episodes: int = 100
    reward: str = "difference"
    eps_y: float = 1e-8
    init_bucket: int = -1

    def __post_init__(self):
        if isinstance(self.n_buckets, bool) or not isinstance(self.n_buckets, int) or self.n_buckets < 1:
            raise ValidationError(f"n_buckets must be a positive integer, got {self.n_buckets!r}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValidationError(f"gamma must be in [0, 1], got {self.gamma}")
        for name in ("actor_lr", "critic_lr"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must be in [0, 1], got {v}")
        if self.sigma0 < 0 or not 0.0 < self.sigma_decay <= 1.0:
            raise ValidationError("need sigma0 >= 0 and sigma_decay in (0, 1]")
        if not 0.0 <= self.sigma_min <= self.sigma0:
            raise ValidationError("sigma_min must be in [0, sigma0]")
        if isinstance(self.episodes, bool) or not isinstance(self.episodes, int) or self.episodes < 0:
            raise ValidationError("episodes must be a non-negative integer")
        if self.reward not in REWARD_KINDS:
            raise ValidationError(f"reward must be one of {sorted(REWARD_KINDS)}")
        if not self.eps_y > 0:
            raise ValidationError("eps_y must be positive")
        if not -1 <= self.init_bucket < self.n_buckets:
            raise ValidationError("init_bucket must index a bucket, or be -1 for a uniform reset")


@dataclass
class PolicyModel:
    actor_logits: np.ndarray  # n x M
    critic_values: np.ndarray  # n
    exploration_std: float
    actor_lr: float
    critic_lr: float
    gamma: float = 0.9
    sigma0: float = 0.5
    sigma_decay: float = 0.97
    episodes_done: int = 0
    sigma_min: float = 0.0

    def __post_init__(self):
        self.actor_logits = np.array(self.actor_logits, dtype=float, order="C")
        self.critic_values = np.array(self.critic_values, dtype=float)
        if self.actor_logits.ndim != 2 or self.critic_values.shape != (self.actor_logits.shape[0],):
            raise ValidationError("actor_logits must be n x M and critic_values length n")
        if not (np.isfinite(self.actor_logits).all() and np.isfinite(self.critic_values).all()):
            raise ValidationError("policy parameters must be finite")
        if self.exploration_std < 0:
            raise ValidationError("exploration_std must be >= 0")

    @classmethod
    def initial(cls, n: int, m: int, config: RLConfig | None = None) -> "PolicyModel":
        c = config or RLConfig(n_buckets=n)
        return cls(np.zeros((n, m)), np.zeros(n), c.sigma0, c.actor_lr, c.critic_lr, c.gamma, c.sigma0,
                   c.sigma_decay, 0, c.sigma_min)

    @property
    def n_buckets(self) -> int:
        return self.actor_logits.shape[0]

    @property
    def n_models(self) -> int:
        return self.actor_logits.shape[1]

    def sigma_for_episode(self, e: int) -> float:
        """Geometric decay from ``sigma0``, never below ``sigma_min``."""
        return max(self.sigma_min, self.sigma0 * self.sigma_decay**e)

    def copy(self) -> "PolicyModel":
        return PolicyModel(
            self.actor_logits.copy(), self.critic_values.copy(), self.exploration_std,
            self.actor_lr, self.critic_lr, self.gamma, self.sigma0, self.sigma_decay, self.episodes_done,
            self.sigma_min,
        )

    def to_dict(self) -> dict:
        return {
            "format": POLICY_FORMAT,
            "n": self.n_buckets,
            "M": self.n_models,
            "actor_logits": self.actor_logits.tolist(),
            "critic_values": self.critic_values.tolist(),
            "exploration_std": self.exploration_std,
            "actor_lr": self.actor_lr,
            "critic_lr": self.critic_lr,
            "gamma": self.gamma,
            "sigma0": self.sigma0,
            "sigma_decay": self.sigma_decay,
            "sigma_min": self.sigma_min,
            "episodes_done": self.episodes_done,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyModel":
        if d.get("format") != POLICY_FORMAT:
            raise ArtifactError(f"not a policy file (format={d.get('format')!r})")
        p = cls(
            d["actor_logits"], d["critic_values"], d["exploration_std"], d["actor_lr"], d["critic_lr"],
            d.get("gamma", 0.9), d.get("sigma0", 0.5), d.get("sigma_decay", 0.97), d.get("episodes_done", 0), d.get("sigma_min", 0.0),
        )
        if p.actor_logits.shape != (d["n"], d["M"]):
            raise ArtifactError("policy file dimensions do not match its matrices")
        return p

    def save(self, path) -> None:
        try:
            Path(path).write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")
        except OSError as exc:
            raise ArtifactError(f"cannot write {path}: {exc}") from exc

    @classmethod
    def load(cls, path) -> "PolicyModel":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except OSError as exc:
            raise ArtifactError(f"cannot read policy file {path}: {exc}") from exc


def select_action(policy: PolicyModel, state: ErrorState, mode: str = "exploit",
                  rng: np.random.Generator | None = None) -> tuple[WeightVector, np.ndarray]:
    """Weights for ``state`` plus the logit perturbation that produced them."""
    if not 0 <= state.bucket < policy.n_buckets:
        raise ContractError(f"bucket {state.bucket} outside policy with {policy.n_buckets} buckets")
    row = policy.actor_logits[state.bucket]
    if mode == "exploit":
        noise = np.zeros_like(row)
    elif mode == "explore":
        if rng is None:
            raise ContractError("explore mode needs an rng")
        noise = policy.exploration_std * rng.standard_normal(row.size)
    else:
        raise ValidationError(f"unknown mode {mode!r}")
    return from_logits(row + noise), noise


@dataclass(frozen=True)
class Transition:
    state: ErrorState
    noise: np.ndarray
    reward: float
    next_state: ErrorState
    terminal: bool = False


def td_update(policy: PolicyModel, t: Transition) -> PolicyModel:
    """One actor-critic step; returns an updated copy.

    The critic moves ``V[s]`` toward the one-step target. The actor moves the
    logits of ``s`` along the score of the Gaussian exploration density,
    ``noise / sigma**2``, scaled by the TD error. Without exploration noise
    (``sigma == 0``) only the critic changes.
    """
    if not math.isfinite(t.reward):
        raise ContractError("reward must be finite")
    out = policy.copy()
    s, s2 = t.state.bucket, t.next_state.bucket
    V = out.critic_values
    bootstrap = 0.0 if t.terminal else out.gamma * V[s2]
    delta = t.reward + bootstrap - V[s]
    V[s] += out.critic_lr * delta
    sigma = out.exploration_std
    if sigma > 0.0 and out.actor_lr != 0.0:
        out.actor_logits[s] += out.actor_lr * delta * (np.asarray(t.noise, dtype=float) / (sigma * sigma))
    return out


@dataclass
class EpisodeLog:
    episode_index: int
    segment: int
    time_indices: np.ndarray  # K
    raw: np.ndarray  # K + 1; entry 0 is the reset state
    buckets: np.ndarray  # K + 1
    rewards: np.ndarray  # K
    weights: np.ndarray  # K x M
    degenerate: np.ndarray  # K + 1
    sigma: float = 0.0

    @property
    def total_reward(self) -> float:
        total = 0.0
        for r in self.rewards.tolist():
            total += r
        return total

    @property
    def n_steps(self) -> int:
        return int(self.rewards.size)


def reset_weights(policy: PolicyModel, init_bucket: int) -> np.ndarray:
    """Weights used to score the reset state: uniform, or the exploit action of one bucket."""
    if init_bucket < 0:
        return np.full(policy.n_models, 1.0 / policy.n_models)
    return softmax(policy.actor_logits[init_bucket])


def segment_columns(panel: ForecastPanel, segment: tuple[int, int]) -> np.ndarray:
    """Panel indices that fall inside a training segment."""
    a, b = segment
    idx = panel.time_indices
    return idx[(idx >= a) & (idx <= b)]


def train_episodic(policy: PolicyModel, panel: ForecastPanel, truth: TimeSeries, plan: SplitPlan,
                   total_episodes: int, rng: np.random.Generator, config: RLConfig | None = None,
                   backend=None) -> tuple[PolicyModel, list[EpisodeLog]]:
    """Round-robin episodes over the training segments.

    Each episode resets the error state, then for every sample: perturbed
    action from the current bucket, combine, new state, reward, TD update.
    Exploration noise decays geometrically per episode.
    """
    cfg = config or RLConfig(n_buckets=policy.n_buckets)
    if cfg.n_buckets != policy.n_buckets:
        raise ValidationError("config bucket count does not match the policy")
    if panel.n_models != policy.n_models:
        raise ValidationError(f"panel has {panel.n_models} models, policy expects {policy.n_models}")
    k = kernels.get_backend(backend) if isinstance(backend, (str, type(None))) else backend
    fallback_var = truth.known_variance() or 1.0
    reward_kind = REWARD_KINDS[cfg.reward]
    out = policy.copy()
    segments = []
    for seg in plan.train_segments:
        idx = segment_columns(panel, seg)
        if idx.size == 0:
            raise ContractError(f"panel has no columns in training segment {seg}")
        pos = panel.positions(idx)
        y = truth.values[idx - truth.start_index]
        if not np.isfinite(y).all():
            raise ContractError(f"training segment {seg} has missing truth values")
        segments.append((idx, np.ascontiguousarray(panel.predictions[:, pos].T), np.ascontiguousarray(y)))

    logs = []
    m = panel.n_models
    for e in range(total_episodes):
        seg_no = e % len(segments)
        idx, preds, y = segments[seg_no]
        K = idx.size
        sigma = out.sigma_for_episode(out.episodes_done)
        out.exploration_std = sigma
        noise = rng.standard_normal((K, m))
        raw = np.empty(K + 1)
        buckets = np.empty(K + 1, dtype=np.int64)
        rewards = np.empty(K)
        weights = np.empty((K, m))
        deg = np.zeros(K + 1, dtype=np.uint8)
        k.run_episode(
            out.actor_logits, out.critic_values, preds, y, noise, sigma, out.actor_lr, out.critic_lr,
            out.gamma, cfg.init_bucket, cfg.eps_y, fallback_var, reward_kind,
            raw, buckets, rewards, weights, deg,
        )
        if not (np.isfinite(out.actor_logits).all() and np.isfinite(out.critic_values).all()):
            from .errors import NumericError

            raise NumericError(f"policy parameters became non-finite in episode {e}")
        logs.append(EpisodeLog(e, seg_no, idx.copy(), raw, buckets, rewards, weights, deg.astype(bool), sigma))
        out.episodes_done += 1
    out.exploration_std = out.sigma_for_episode(out.episodes_done)
    return out, logs


@dataclass
class StepLog:
    time_index: int
    prev_state: ErrorState
    weights: np.ndarray
    prediction: float
    feedback: float
    state: ErrorState
    reward: float
    proxy: bool


@dataclass
class InferenceResult:
    predictions: np.ndarray
    time_indices: np.ndarray
    policy: PolicyModel
    steps: list[StepLog] = field(default_factory=list)
    feedback: str = "true-value"

    @property
    def weights(self) -> np.ndarray:
        return np.array([s.weights for s in self.steps])

    @property
    def n_updates(self) -> int:
        return len(self.steps)


def _runs(indices: np.ndarray) -> list[np.ndarray]:
    if indices.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(indices) != 1) + 1
    return np.split(indices, breaks)


def infer_online(policy: PolicyModel, models: Sequence[Forecaster], series: TimeSeries, test_indices,
                 config: RLConfig | None = None, feedback: str = "true-value", lag_source: str = "model",
                 panel: ForecastPanel | None = None) -> InferenceResult:
    """Predict test indices in order, updating the policy after each observed error.

    Every contiguous run of test indices starts from the error state of the
    reset weights on the sample just before it. ``feedback="proxy"`` scores
    each step against the mean of the model predictions instead of the
    realised value; use it when the held-out values are genuinely unknown.
    """
    cfg = config or RLConfig(n_buckets=policy.n_buckets)
    if feedback not in FEEDBACK_MODES:
        raise ValidationError(f"feedback must be one of {FEEDBACK_MODES}")
    if lag_source not in LAG_SOURCES:
        raise ValidationError(f"lag_source must be one of {LAG_SOURCES}")
    test_indices = np.asarray(list(test_indices), dtype=np.int64)
    if feedback == "true-value" and not np.isfinite(series.values[test_indices - series.start_index]).all():
        raise ContractError("true-value feedback needs held-out values at every test index; use proxy feedback")
    n = cfg.n_buckets
    fallback_var = series.known_variance() or 1.0
    if panel is None:
        from .forecasters import build_panel

        need = sorted(set(test_indices.tolist()) | {int(r[0]) - 1 for r in _runs(test_indices)})
        panel = build_panel(models, series, need)
    history = EnsembleFedHistory(series) if lag_source == "ensemble" else None

    pol = policy.copy()
    pol.exploration_std = 0.0
    preds_out, steps = [], []
    for run in _runs(test_indices):
        before = int(run[0]) - 1
        if series.is_missing(before):
            raise ContractError(f"sample {before} before test run is not observed")
        w0 = reset_weights(pol, cfg.init_bucket)
        prev = state_from_error(series.value(before), combine(w0, panel.column(before)), n, cfg.eps_y, fallback_var)
        for t in run.tolist():
            col = history.predictions_at(models, t) if history is not None else panel.column(t)
            w, noise = select_action(pol, prev, "exploit")
            yhat = combine(w, col)
            if history is not None:
                history.record(t, yhat)
            if feedback == "true-value":
                y_fb = series.value(t)
            else:
                y_fb = float(np.mean(col))
            curr = state_from_error(y_fb, yhat, n, cfg.eps_y, fallback_var)
            r = compute_reward(prev, curr, cfg.reward)
            pol = td_update(pol, Transition(prev, noise, r, curr, terminal=False))
            preds_out.append(yhat)
            steps.append(StepLog(t, prev, w.weights, yhat, y_fb, curr, r, feedback == "proxy"))
            prev = curr
    pol.exploration_std = policy.exploration_std
    return InferenceResult(np.array(preds_out), test_indices, pol, steps, feedback)
