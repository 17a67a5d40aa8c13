"""Error metric, reward curves, dominant-model bands and strategy comparison."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .config import RunConfig, load_series
from .errors import ContractError, RLEnsembleError, UndefinedMetricError
from .pipeline import RLRun, prepare, run_strategy


def nmse(predictions: Sequence[float], truth: Sequence[float]) -> float:
    """Sum of squared errors divided by the sum of squared true values."""
    p = np.asarray(predictions, dtype=float).reshape(-1)
    y = np.asarray(truth, dtype=float).reshape(-1)
    if p.size != y.size or y.size == 0:
        raise ContractError(f"need equal non-empty lengths, got {p.size} and {y.size}")
    if not (np.isfinite(p).all() and np.isfinite(y).all()):
        raise ContractError("predictions and truth must be finite")
    denom = float(np.dot(y, y))
    if denom == 0.0:
        raise UndefinedMetricError("NMSE is undefined when every true value is zero")
    r = y - p
    return float(np.dot(r, r)) / denom


def smooth(values: Sequence[float], window: int) -> np.ndarray:
    """Centered moving average; near the ends the window shrinks to what exists."""
    if window < 1:
        raise ContractError("smoothing window must be >= 1")
    v = np.asarray(values, dtype=float)
    half_lo = (window - 1) // 2
    half_hi = window - 1 - half_lo
    out = np.empty(v.size)
    for i in range(v.size):
        lo, hi = max(0, i - half_lo), min(v.size, i + half_hi + 1)
        out[i] = float(np.mean(v[lo:hi]))
    return out


def reward_curve(logs, smoothing_window: int = 5) -> np.ndarray:
    """Smoothed per-episode total reward; accepts episode logs or plain totals."""
    totals = [lg.total_reward if hasattr(lg, "total_reward") else float(lg) for lg in logs]
    return smooth(totals, smoothing_window)


@dataclass(frozen=True)
class Band:
    start: int
    end: int
    model: str
    share: float
    shares: tuple[float, ...]


def band_dominance(time_indices: Sequence[int], weights, band_size: int, model_names: Sequence[str],
                   origin: int = 1) -> list[Band]:
    """Per band of ``band_size`` samples, the model with the largest summed weight.

    Bands are ``[origin + k*band_size, origin + (k+1)*band_size - 1]``; only
    bands containing logged steps are reported. Ties go to the lower model index.
    """
    if band_size < 1:
        raise ContractError("band_size must be >= 1")
    idx = np.asarray(time_indices, dtype=np.int64).reshape(-1)
    w = np.asarray(weights, dtype=float).reshape(idx.size, -1)
    if w.shape[1] != len(model_names):
        raise ContractError(f"{w.shape[1]} weight columns for {len(model_names)} models")
    if idx.size == 0:
        return []
    band_of = (idx - origin) // band_size
    out = []
    for k in np.unique(band_of):
        sums = w[band_of == k].sum(axis=0)
        shares = sums / sums.sum()
        top = int(np.argmax(shares))
        start = int(origin + k * band_size)
        out.append(Band(start, start + band_size - 1, model_names[top], float(shares[top]),
                        tuple(float(s) for s in shares)))
    return out


@dataclass
class EvalReport:
    strategies: list[str]
    seeds: list[int]
    model_names: list[str]
    nmse: dict[str, dict[int, float | None]]
    failures: dict[str, dict[int, str]]
    episode_rewards: dict[int, list[float]]
    band_dominance: dict[int, list[Band]]
    feedback: str
    runtime_per_step: dict[str, float] = field(default_factory=dict)
    test_indices: np.ndarray | None = None
    truth: np.ndarray | None = None
    predictions: dict[int, dict[str, np.ndarray]] = field(default_factory=dict)

    def summary(self, name: str) -> dict:
        vals = [v for v in self.nmse[name].values() if v is not None]
        if not vals:
            return {"mean": None, "min": None, "max": None, "n": 0}
        return {"mean": float(np.mean(vals)), "min": float(min(vals)), "max": float(max(vals)), "n": len(vals)}

    @property
    def ok(self) -> bool:
        return not any(self.failures.values())

    def to_dict(self) -> dict:
        """Deterministic content only; wall-clock timings are kept out."""
        return {
            "format": "rlensemble.report/1",
            "feedback": self.feedback,
            "seeds": list(self.seeds),
            "models": list(self.model_names),
            "strategies": {
                name: {
                    "label": self.label(name),
                    "per_seed": {str(s): self.nmse[name].get(s) for s in self.seeds},
                    "failures": {str(s): msg for s, msg in self.failures[name].items()},
                    **self.summary(name),
                }
                for name in self.strategies
            },
            "episode_rewards": {str(s): r for s, r in self.episode_rewards.items()},
            "band_dominance": {
                str(s): [
                    {"start": b.start, "end": b.end, "model": b.model, "share": b.share, "shares": list(b.shares)}
                    for b in bands
                ]
                for s, bands in self.band_dominance.items()
            },
        }

    def label(self, name: str) -> str:
        if name == "rl" and self.feedback == "proxy":
            return "rl (proxy-feedback)"
        return name

    def to_text(self) -> str:
        rows = [("strategy", "mean NMSE", "min", "max", "seeds ok")]
        for name in self.strategies:
            s = self.summary(name)
            fmt = (lambda v: "failed" if v is None else f"{v:.6f}")
            rows.append((self.label(name), fmt(s["mean"]), fmt(s["min"]), fmt(s["max"]), f"{s['n']}/{len(self.seeds)}"))
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))) for r in rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        for name in self.strategies:
            for s, msg in self.failures[name].items():
                lines.append(f"! {name} seed {s}: {msg}")
        return "\n".join(lines) + "\n"


def compare_strategies(cfg: RunConfig, series=None, plan=None, prepared: dict | None = None) -> EvalReport:
    """Run every configured strategy on identical panels for each seed.

    A strategy that raises is recorded as a failed cell; the table is still built.
    ``prepared`` may map seeds to already fitted :class:`Prepared` runs.
    """
    if series is None or plan is None:
        series, plan = load_series(cfg.data, cfg.split)
    names = cfg.expanded_strategies()
    report = EvalReport(names, list(cfg.seeds), [d["name"] for d in cfg.forecasters],
                        {n: {} for n in names}, {n: {} for n in names}, {}, {}, cfg.feedback)
    report.test_indices = plan.test_indices
    truth = series.values[plan.test_indices - series.start_index]
    report.truth = truth
    timings: dict[str, list[float]] = {}
    for seed in cfg.seeds:
        report.predictions[seed] = {}
        try:
            prep = (prepared or {}).get(seed) or prepare(cfg, seed, series, plan)
        except RLEnsembleError as exc:
            for name in names:
                report.nmse[name][seed] = None
                report.failures[name][seed] = f"forecaster setup failed: {type(exc).__name__}: {exc}"
            continue
        for name in names:
            try:
                rec, run = run_strategy(name, cfg, prep)
                report.predictions[seed][name] = run.predictions
                if run.seconds_per_step is not None:
                    timings.setdefault(name, []).append(run.seconds_per_step)
                if isinstance(rec, RLRun):
                    report.episode_rewards[seed] = [lg.total_reward for lg in rec.logs]
                    idx, w = rec.band_log()
                    report.band_dominance[seed] = band_dominance(idx, w, cfg.band_size, prep.model_names)
                if not np.isfinite(truth).all():
                    raise UndefinedMetricError("no held-out truth for the test indices")
                report.nmse[name][seed] = nmse(run.predictions, truth)
            except RLEnsembleError as exc:
                report.nmse[name][seed] = None
                report.failures[name][seed] = f"{type(exc).__name__}: {exc}"
    report.runtime_per_step = {k: float(np.mean(v)) for k, v in timings.items()}
    return report
