"""Run configuration: one JSON document that fully determines a run."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .baselines import TEST_MODES
from .controller import FEEDBACK_MODES, LAG_SOURCES, RLConfig
from .errors import ArtifactError, StructureError, ValidationError
from .forecasters import ForecasterSpec, default_specs
from .series import (
    CATS_PERIOD,
    CATS_TEST_LENGTH,
    SplitPlan,
    TimeSeries,
    block_split,
    cats_split,
    load_csv,
    merge_truth,
    regime_benchmark_segments,
    synth_cats_like,
    synth_regimes,
)

MANIFEST_FORMAT = "rlensemble.manifest/1"
STRATEGY_NAMES = ("rl", "online-nn", "static", "uniform", "each-single-model")
SYNTH_KINDS = ("regimes", "regime-benchmark", "cats-like")
SPLIT_KINDS = ("cats", "blocks", "ratio")
TRAIN_PANELS = ("in-sample", "out-of-bag", "cross-fit")


def _check_keys(d: dict, allowed, where: str) -> None:
    if not isinstance(d, dict):
        raise ValidationError(f"{where} must be an object")
    extra = set(d) - set(allowed)
    if extra:
        raise ValidationError(f"unknown keys in {where}: {sorted(extra)}")


@dataclass
class DataConfig:
    csv: str | None = None
    truth_csv: str | None = None
    missing_policy: str = "empty-cell"
    sentinel: str = "-9999"
    synth: dict | None = None
    # Mark test segments of a complete series as missing, so test forecasts roll over them.
    mask_test: bool = True

    def __post_init__(self):
        if (self.csv is None) == (self.synth is None):
            raise ValidationError("data needs exactly one of 'csv' or 'synth'")
        if self.missing_policy not in ("empty-cell", "sentinel"):
            raise ValidationError("missing_policy must be 'empty-cell' or 'sentinel'")
        if self.synth is not None:
            _check_keys(self.synth, ("kind", "seed", "segments", "length", "n_regimes"), "data.synth")
            kind = self.synth.get("kind")
            if kind not in SYNTH_KINDS:
                raise ValidationError(f"data.synth.kind must be one of {SYNTH_KINDS}")
            if kind == "regimes" and not self.synth.get("segments"):
                raise ValidationError("data.synth of kind 'regimes' needs 'segments'")
        if self.truth_csv is not None and self.csv is None:
            raise ValidationError("truth_csv only applies to csv data")


@dataclass
class SplitConfig:
    kind: str = "cats"
    period: int = CATS_PERIOD
    test_length: int = CATS_TEST_LENGTH
    train_fraction: float = 0.8

    def __post_init__(self):
        if self.kind not in SPLIT_KINDS:
            raise ValidationError(f"split.kind must be one of {SPLIT_KINDS}")
        if self.kind == "blocks" and not (0 < self.test_length < self.period):
            raise ValidationError("block split needs 0 < test_length < period")
        if self.kind == "ratio" and not 0.0 < self.train_fraction < 1.0:
            raise ValidationError("train_fraction must be in (0, 1)")


@dataclass
class OnlineNNConfig:
    learning_rate: float = 0.01
    init_range: float = 0.1
    test_mode: str = "frozen-network"
    standardize: bool = True

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValidationError("online_nn.learning_rate must be >= 0")
        if not self.init_range > 0:
            raise ValidationError("online_nn.init_range must be > 0")
        if self.test_mode not in TEST_MODES:
            raise ValidationError(f"online_nn.test_mode must be one of {TEST_MODES}")


@dataclass
class StaticConfig:
    tol: float = 1e-8
    max_iter: int = 200_000

    def __post_init__(self):
        if not self.tol > 0 or self.max_iter < 1:
            raise ValidationError("static needs tol > 0 and max_iter >= 1")


@dataclass
class RunConfig:
    data: DataConfig
    split: SplitConfig = field(default_factory=SplitConfig)
    forecasters: list = field(default_factory=list)
    rl: RLConfig = field(default_factory=RLConfig)
    online_nn: OnlineNNConfig = field(default_factory=OnlineNNConfig)
    static: StaticConfig = field(default_factory=StaticConfig)
    strategies: list = field(default_factory=lambda: list(STRATEGY_NAMES))
    seeds: list = field(default_factory=lambda: [0])
    feedback: str = "true-value"
    lag_source: str = "model"
    output_dir: str = "out"
    band_size: int = 1000
    smoothing_window: int = 5
    # how training-panel entries are produced: in-sample fits, out-of-bag for trees, or out-of-fold refits
    train_panel: str = "cross-fit"
    cross_fit_folds: int = 3

    def __post_init__(self):
        if not self.seeds or any(isinstance(s, bool) or not isinstance(s, int) or s < 0 for s in self.seeds):
            raise ValidationError("seeds must be a non-empty list of non-negative integers")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValidationError("seeds must be distinct")
        if self.feedback not in FEEDBACK_MODES:
            raise ValidationError(f"feedback must be one of {FEEDBACK_MODES}")
        if self.lag_source not in LAG_SOURCES:
            raise ValidationError(f"lag_source must be one of {LAG_SOURCES}")
        for s in self.strategies:
            if s not in STRATEGY_NAMES and not (isinstance(s, str) and s.startswith("single:")):
                raise ValidationError(f"unknown strategy {s!r}")
        if not self.strategies:
            raise ValidationError("at least one strategy is required")
        if self.train_panel not in TRAIN_PANELS:
            raise ValidationError(f"train_panel must be one of {TRAIN_PANELS}")
        if isinstance(self.cross_fit_folds, bool) or not isinstance(self.cross_fit_folds, int) or self.cross_fit_folds < 2:
            raise ValidationError("cross_fit_folds must be an integer >= 2")
        if self.band_size < 1 or self.smoothing_window < 1:
            raise ValidationError("band_size and smoothing_window must be >= 1")
        specs = [ForecasterSpec.from_dict(d) for d in self.forecasters] if self.forecasters else default_specs(0)
        names = [s.label for s in specs]
        if len(specs) < 2:
            raise ValidationError("the ensemble needs at least two forecasters")
        if len(set(names)) != len(names):
            raise ValidationError(f"forecaster names must be unique, got {names}")
        for s in self.strategies:
            if s.startswith("single:") and s[len("single:"):] not in names:
                raise ValidationError(f"strategy {s!r} names no configured forecaster")
        self.forecasters = [_spec_dict(s) for s in specs]

    def specs(self, seed: int) -> list[ForecasterSpec]:
        """Forecaster specs with the run seed substituted."""
        out = []
        for d in self.forecasters:
            d = dict(d, seed=seed)
            out.append(ForecasterSpec.from_dict(d))
        return out

    def expanded_strategies(self) -> list[str]:
        names = [d["name"] for d in self.forecasters]
        out = []
        for s in self.strategies:
            items = [f"single:{n}" for n in names] if s == "each-single-model" else [s]
            out.extend(i for i in items if i not in out)
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rl"] = asdict(self.rl)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = copy.deepcopy(d)
        _check_keys(d, [f.name for f in fields(cls)], "config")
        if "data" not in d:
            raise ValidationError("config needs a 'data' section")
        sub = {"data": DataConfig, "split": SplitConfig, "rl": RLConfig, "online_nn": OnlineNNConfig, "static": StaticConfig}
        kwargs = {}
        for key, value in d.items():
            if key in sub:
                _check_keys(value, [f.name for f in fields(sub[key])], key)
                try:
                    kwargs[key] = sub[key](**value)
                except TypeError as exc:
                    raise ValidationError(f"bad {key} section: {exc}") from exc
            else:
                kwargs[key] = value
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ValidationError(f"bad config: {exc}") from exc


def _spec_dict(spec: ForecasterSpec) -> dict:
    d = spec.to_dict()
    d["name"] = spec.label
    d.pop("seed")
    return d


def read_config(path) -> RunConfig:
    """Load a config file, or the config embedded in a run manifest."""
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ArtifactError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path} is not valid JSON: {exc}") from exc
    if isinstance(d, dict) and d.get("format") == MANIFEST_FORMAT:
        d = d["config"]
    cfg = RunConfig.from_dict(d)
    base = Path(path).resolve().parent
    for attr in ("csv", "truth_csv"):
        value = getattr(cfg.data, attr)
        if value is not None and not Path(value).is_absolute():
            setattr(cfg.data, attr, str(base / value))
    return cfg


def load_series(data: DataConfig, split: SplitConfig) -> tuple[TimeSeries, SplitPlan]:
    """Build the series and its split; synthetic test blocks keep their truth."""
    if data.csv is not None:
        series = load_csv(data.csv, data.missing_policy, data.sentinel)
        plan = make_split(series, split)
        if not series.missing_blocks and data.mask_test:
            series = series.with_missing_blocks(plan.test_segments)
        if data.truth_csv is not None:
            series = merge_truth(series, load_csv(data.truth_csv, data.missing_policy, data.sentinel))
        return series, plan
    syn = data.synth
    seed = int(syn.get("seed", 0))
    if syn["kind"] == "cats-like":
        series = synth_cats_like(seed)
    elif syn["kind"] == "regime-benchmark":
        series = synth_regimes(regime_benchmark_segments(syn.get("length", 2000), syn.get("n_regimes", 4)), seed)
    else:
        series = synth_regimes(syn["segments"], seed)
    plan = make_split(series, split)
    return (series.with_missing_blocks(plan.test_segments) if data.mask_test else series), plan


def make_split(series: TimeSeries, split: SplitConfig) -> SplitPlan:
    if split.kind == "cats":
        if series.missing_blocks:
            return cats_split(series)
        return block_split(series, CATS_PERIOD, CATS_TEST_LENGTH)
    if split.kind == "blocks":
        return block_split(series, split.period, split.test_length)
    n_train = int(round(len(series) * split.train_fraction))
    if not 0 < n_train < len(series):
        raise ValidationError("ratio split leaves an empty train or test part")
    s, e = series.start_index, series.end_index
    test = ((s + n_train, e),)
    if series.missing_blocks and tuple(series.missing_blocks) != test:
        raise StructureError(f"missing blocks {list(series.missing_blocks)} do not match the ratio split {list(test)}")
    return SplitPlan(((s, s + n_train - 1),), test, n_train)
