"""One seeded run: fit forecasters, build the panel, run each strategy."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .baselines import (
    OnlineNNWeighter,
    fit_static_weights,
    fixed_predictions,
    nn_infer,
    nn_predict,
    nn_train,
    single_model_predictions,
    uniform_predictions,
)
from .combiner import WeightVector
from .config import RunConfig
from .controller import EpisodeLog, InferenceResult, PolicyModel, infer_online, train_episodic
from .errors import ContractError
from .forecasters import Forecaster, ForecastPanel, build_panel, fit_all, sub_rng, train_segments
from .forecasters.crossfit import cross_fit
from .series import SplitPlan, TimeSeries


@dataclass
class Prepared:
    """Fitted forecasters and their panel for one seed.

    ``panel`` holds the deployed models' one-step predictions everywhere. The
    strategies learn from ``fitting_panel()``, whose training entries come
    from ``train_mode``: in-sample fits, out-of-bag estimates for bagged
    trees, or out-of-fold refits.
    """

    seed: int
    series: TimeSeries
    plan: SplitPlan
    models: list[Forecaster]
    panel: ForecastPanel
    train_mode: str = "in-sample"
    folds: int = 3
    _fitting: ForecastPanel | None = field(default=None, repr=False)

    @property
    def model_names(self) -> tuple[str, ...]:
        return self.panel.model_names

    def fitting_panel(self) -> ForecastPanel:
        if self._fitting is None:
            self._fitting = self._make_fitting_panel()
        return self._fitting

    def _make_fitting_panel(self) -> ForecastPanel:
        if self.train_mode == "in-sample":
            return self.panel
        if self.train_mode == "out-of-bag":
            return build_panel(self.models, self.series, self.panel.time_indices, in_sample=True)
        idx, oof = cross_fit([m.spec for m in self.models], self.series, self.plan, self.folds)
        preds = self.panel.predictions.copy()
        preds[:, self.panel.positions(idx)] = oof
        return ForecastPanel(preds, self.panel.model_names, self.panel.time_indices)

    def train_panel(self) -> ForecastPanel:
        idx = self.plan.train_indices
        panel = self.fitting_panel()
        return panel.select(idx[np.isin(idx, panel.time_indices)])

    def test_panel(self) -> ForecastPanel:
        return self.panel.select(self.plan.test_indices)

    def truth_at(self, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.int64)
        return self.series.values[idx - self.series.start_index]


def panel_indices(series: TimeSeries, models) -> range:
    lag = max(m.lag_order for m in models)
    return range(series.start_index + lag, series.end_index + 1)


def prepare(cfg: RunConfig, seed: int, series: TimeSeries, plan: SplitPlan, models=None) -> Prepared:
    if models is None:
        models = fit_all(cfg.specs(seed), train_segments(series, plan))
    panel = build_panel(models, series, panel_indices(series, models))
    missing_test = set(plan.test_indices.tolist()) - set(panel.time_indices.tolist())
    if missing_test:
        raise ContractError(f"test index {min(missing_test)} has too little history for the lag order")
    return Prepared(seed, series, plan, list(models), panel, cfg.train_panel, cfg.cross_fit_folds)


@dataclass
class StrategyRun:
    name: str
    predictions: np.ndarray
    weights: np.ndarray | None = None
    seconds_per_step: float | None = None
    extra: dict = field(default_factory=dict)


@dataclass
class RLRun:
    policy: PolicyModel
    logs: list[EpisodeLog]
    inference: InferenceResult

    def band_log(self) -> tuple[np.ndarray, np.ndarray]:
        """Time indices and weights of the last training pass plus the test run, in time order."""
        n_seg = max((lg.segment for lg in self.logs), default=-1) + 1
        passes = self.logs[-n_seg:] if n_seg else []
        idx = [lg.time_indices for lg in passes] + [self.inference.time_indices]
        w = [lg.weights for lg in passes] + [self.inference.weights.reshape(-1, self.policy.n_models)]
        idx = np.concatenate(idx)
        w = np.concatenate(w)
        order = np.argsort(idx, kind="stable")
        return idx[order], w[order]


def run_rl(cfg: RunConfig, prep: Prepared, policy: PolicyModel | None = None) -> tuple[RLRun, StrategyRun]:
    if policy is None:
        policy = PolicyModel.initial(cfg.rl.n_buckets, prep.panel.n_models, cfg.rl)
        policy, logs = train_episodic(policy, prep.fitting_panel(), prep.series, prep.plan, cfg.rl.episodes,
                                      sub_rng(prep.seed, "rl/exploration"), cfg.rl)
    else:
        logs = []
    t0 = time.perf_counter()
    res = infer_online(policy, prep.models, prep.series, prep.plan.test_indices, cfg.rl,
                       cfg.feedback, cfg.lag_source, prep.panel)
    dt = (time.perf_counter() - t0) / max(res.n_updates, 1)
    run = StrategyRun("rl", res.predictions, res.weights, dt, {"feedback": res.feedback})
    return RLRun(policy, logs, res), run


def make_weighter(cfg: RunConfig, prep: Prepared) -> OnlineNNWeighter:
    nn = cfg.online_nn
    mean, scale = 0.0, 1.0
    if nn.standardize:
        train = prep.truth_at(prep.plan.train_indices)
        mean = float(np.mean(train))
        sd = float(np.std(train))
        scale = sd if sd > 1e-12 else 1.0
    return OnlineNNWeighter.initial(prep.panel.n_models, nn.learning_rate, prep.seed, mean, scale, nn.init_range)


def train_online_nn(cfg: RunConfig, prep: Prepared):
    tp = prep.train_panel()
    t0 = time.perf_counter()
    weighter, _ = nn_train(make_weighter(cfg, prep), tp, prep.truth_at(tp.time_indices))
    dt = (time.perf_counter() - t0) / max(len(tp), 1)
    final = nn_infer(weighter, tp.predictions[:, -1])
    return weighter, final, dt


def run_online_nn(cfg: RunConfig, prep: Prepared, weighter=None, final=None) -> StrategyRun:
    dt = None
    if weighter is None:
        weighter, final, dt = train_online_nn(cfg, prep)
    preds, weights = nn_predict(weighter, prep.test_panel(), cfg.online_nn.test_mode, final)
    return StrategyRun("online-nn", preds, weights, dt, {"test_mode": cfg.online_nn.test_mode})


def fit_static(cfg: RunConfig, prep: Prepared) -> WeightVector:
    tp = prep.train_panel()
    return fit_static_weights(tp, prep.truth_at(tp.time_indices), cfg.static.tol, cfg.static.max_iter)


def run_static(cfg: RunConfig, prep: Prepared, weights: WeightVector | None = None) -> StrategyRun:
    w = weights if weights is not None else fit_static(cfg, prep)
    test = prep.test_panel()
    return StrategyRun("static", fixed_predictions(test, w), np.tile(w.weights, (len(test), 1)))


def run_strategy(name: str, cfg: RunConfig, prep: Prepared):
    """Run one strategy; RL also returns its training record."""
    if name == "rl":
        return run_rl(cfg, prep)
    if name == "online-nn":
        return None, run_online_nn(cfg, prep)
    if name == "static":
        return None, run_static(cfg, prep)
    test = prep.test_panel()
    if name == "uniform":
        w = np.full((len(test), test.n_models), 1.0 / test.n_models)
        return None, StrategyRun("uniform", uniform_predictions(test), w)
    if name.startswith("single:"):
        model = name[len("single:"):]
        w = np.zeros((len(test), test.n_models))
        w[:, test.model_names.index(model)] = 1.0
        return None, StrategyRun(name, single_model_predictions(test, model), w)
    raise ContractError(f"unknown strategy {name!r}")
