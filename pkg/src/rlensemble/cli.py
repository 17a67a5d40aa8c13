"""Command-line entry point: ``rlensemble {train,forecast,compare,synth}``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .baselines import OnlineNNWeighter, load_weights, save_weights
from .config import MANIFEST_FORMAT, RunConfig, load_series, read_config
from .controller import PolicyModel, train_episodic
from .errors import ArtifactError, RLEnsembleError, ValidationError
from .evaluation import compare_strategies, nmse, reward_curve
from .forecasters import load_model, save_model, sub_rng
from .pipeline import (
    Prepared,
    fit_static,
    prepare,
    run_online_nn,
    run_rl,
    run_static,
    run_strategy,
    train_online_nn,
)
from .plots import write_chart
from .series import TimeSeries, regime_benchmark_segments, save_csv, synth_regimes

log = logging.getLogger("rlensemble")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class Outputs:
    """Tracks every file written so the manifest can hash them."""

    def __init__(self, root: Path):
        self.root = root
        self.written: list[Path] = []
        try:
            root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ArtifactError(f"cannot create output directory {root}: {exc}") from exc

    def path(self, rel: str) -> Path:
        p = self.root / rel
        try:
            p.parent.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ArtifactError(f"cannot create {p.parent}: {exc}") from exc
        self.written.append(p)
        return p

    def write_text(self, rel: str, text: str) -> Path:
        p = self.path(rel)
        try:
            p.write_text(text, encoding="utf-8")
        except OSError as exc:
            raise ArtifactError(f"cannot write {p}: {exc}") from exc
        return p

    def write_csv(self, rel: str, header, rows) -> Path:
        p = self.path(rel)
        try:
            with open(p, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(header)
                w.writerows(rows)
        except OSError as exc:
            raise ArtifactError(f"cannot write {p}: {exc}") from exc
        return p

    def manifest(self, command: str, cfg: RunConfig | None, seed, status: str = "ok", error: str | None = None):
        inputs = {}
        if cfg is not None:
            for attr in ("csv", "truth_csv"):
                src = getattr(cfg.data, attr)
                if src and Path(src).exists():
                    inputs[src] = _sha256(Path(src))
        outputs = {
            str(p.relative_to(self.root)): _sha256(p)
            for p in sorted(set(self.written))
            if p.exists() and p.name != "manifest.json"
        }
        doc = {
            "format": MANIFEST_FORMAT,
            "command": command,
            "status": status,
            "config": cfg.to_dict() if cfg is not None else None,
            "seed": seed,
            "versions": {
                "rlensemble": __version__,
                "numpy": np.__version__,
                "python": platform.python_version(),
                "kernel_backend": kernels.BACKEND,
            },
            "inputs": inputs,
            "outputs": outputs,
        }
        if error is not None:
            doc["error"] = error
            doc["partial_outputs"] = sorted(outputs)
        self.write_text("manifest.json", json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _num(v: float) -> str:
    return repr(float(v))


def _resolve(args) -> RunConfig:
    if args.config is None:
        raise ValidationError("--config is required for this command")
    cfg = read_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ValidationError("--seed must be non-negative")
        cfg.seeds = [args.seed]
    if args.out is not None:
        cfg.output_dir = args.out
    if args.feedback is not None:
        cfg.feedback = args.feedback
    # re-run validation on the overridden values
    return RunConfig.from_dict(cfg.to_dict())


def episode_rows(logs):
    for lg in logs:
        for k in range(lg.n_steps):
            yield [lg.episode_index, k + 1, int(lg.time_indices[k]), _num(lg.raw[k + 1]), int(lg.buckets[k + 1]),
                   _num(lg.rewards[k])] + [_num(w) for w in lg.weights[k]]


def cmd_train(cfg: RunConfig, out: Outputs) -> int:
    seed = cfg.seeds[0]
    series, plan = load_series(cfg.data, cfg.split)
    prep = prepare(cfg, seed, series, plan)
    for m in prep.models:
        save_model(m, out.path(f"models/{m.name}.json"))
    policy = PolicyModel.initial(cfg.rl.n_buckets, prep.panel.n_models, cfg.rl)
    policy, logs = train_episodic(policy, prep.fitting_panel(), series, plan, cfg.rl.episodes,
                                  sub_rng(seed, "rl/exploration"), cfg.rl)
    policy.save(out.path("policy.json"))
    m = prep.panel.n_models
    out.write_csv("episodes.csv", ["episode", "step", "time_index", "raw_state", "bucket", "reward"]
                  + [f"w_{i + 1}" for i in range(m)], episode_rows(logs))
    if "online-nn" in cfg.strategies:
        weighter, final, _ = train_online_nn(cfg, prep)
        weighter.save(out.path("online_nn.json"))
        save_weights(final, out.path("online_nn_final_weights.json"), prep.model_names)
    if "static" in cfg.strategies:
        save_weights(fit_static(cfg, prep), out.path("static_weights.json"), prep.model_names)
    log.info("trained %d models and %d episodes into %s", m, len(logs), out.root)
    return 0


def _load_prepared(cfg: RunConfig, artifacts: Path, seed: int) -> Prepared:
    series, plan = load_series(cfg.data, cfg.split)
    models = []
    for d in cfg.forecasters:
        p = artifacts / "models" / f"{d['name']}.json"
        if not p.exists():
            raise ArtifactError(f"missing model artifact {p}")
        models.append(load_model(p))
    return prepare(cfg, seed, series, plan, models)


def _need(path: Path) -> Path:
    if not path.exists():
        raise ArtifactError(f"missing artifact {path}")
    return path


def cmd_forecast(cfg: RunConfig, out: Outputs, artifacts: Path, strategy: str) -> int:
    seed = cfg.seeds[0]
    prep = _load_prepared(cfg, artifacts, seed)
    if strategy == "rl":
        policy = PolicyModel.load(_need(artifacts / "policy.json"))
        rec, run = run_rl(cfg, prep, policy)
        rec.inference.policy.save(out.path("policy_updated.json"))
    elif strategy == "online-nn":
        weighter = OnlineNNWeighter.load(_need(artifacts / "online_nn.json"))
        final = load_weights(_need(artifacts / "online_nn_final_weights.json"))
        run = run_online_nn(cfg, prep, weighter, final)
    elif strategy == "static":
        run = run_static(cfg, prep, load_weights(_need(artifacts / "static_weights.json")))
    else:
        _, run = run_strategy(strategy, cfg, prep)
    idx = prep.plan.test_indices
    truth = prep.truth_at(idx)
    rows = [[int(t), _num(p), _num(y) if np.isfinite(y) else ""] for t, p, y in zip(idx, run.predictions, truth)]
    out.write_csv("predictions.csv", ["time_index", "prediction", "truth"], rows)
    if np.isfinite(truth).all():
        log.info("%s NMSE on %d test samples: %.6f", strategy, idx.size, nmse(run.predictions, truth))
    return 0


def cmd_compare(cfg: RunConfig, out: Outputs, strategy: str | None) -> int:
    if strategy is not None:
        cfg.strategies = [strategy]
        cfg = RunConfig.from_dict(cfg.to_dict())
    report = compare_strategies(cfg)
    out.write_text("report.json", json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n")
    out.write_text("report.txt", report.to_text())
    out.write_text("timings.json", json.dumps({"seconds_per_step": report.runtime_per_step}, indent=1, sort_keys=True) + "\n")
    seeds = [s for s in report.seeds if s in report.episode_rewards]
    if seeds:
        totals = np.array([report.episode_rewards[s] for s in seeds])
        smoothed = np.array([reward_curve(t, cfg.smoothing_window) for t in totals])
        rows = [[e] + [_num(v) for v in totals[:, e]] + [_num(smoothed[:, e].mean())] for e in range(totals.shape[1])]
        out.write_csv("reward_curve.csv", ["episode"] + [f"total_seed{s}" for s in seeds] + ["smoothed_mean"], rows)
        write_chart(out.path("reward_curve.svg"), {"smoothed total reward": (np.arange(totals.shape[1]), smoothed.mean(0))},
                    "Smoothed reward per episode", "episode", "total reward")
        m = len(report.model_names)
        brow = [[s, b.start, b.end, b.model, _num(b.share)] + [_num(x) for x in b.shares]
                for s in seeds for b in report.band_dominance[s]]
        out.write_csv("bands.csv", ["seed", "start", "end", "dominant", "share"] + [f"share_{n}" for n in report.model_names[:m]], brow)
    names = report.strategies
    rows = []
    for s in report.seeds:
        preds = report.predictions.get(s, {})
        for k, t in enumerate(report.test_indices):
            y = report.truth[k]
            rows.append([s, int(t), _num(y) if np.isfinite(y) else ""]
                        + [_num(preds[n][k]) if n in preds else "" for n in names])
    out.write_csv("predictions.csv", ["seed", "time_index", "truth"] + names, rows)
    first = report.seeds[0]
    if report.predictions.get(first):
        x = np.arange(report.test_indices.size)
        lines = {"truth": (x, report.truth)}
        lines.update({n: (x, p) for n, p in report.predictions[first].items() if n in ("rl", "online-nn", "uniform")})
        write_chart(out.path("predictions.svg"), lines, f"Test predictions, seed {first}", "test sample", "value")
    sys.stdout.write(report.to_text())
    return 0 if report.ok else 3


def cmd_synth(cfg: RunConfig | None, out: Outputs, seed: int | None) -> int:
    if cfg is not None:
        series, plan = load_series(cfg.data, cfg.split)
    else:
        series = synth_regimes(regime_benchmark_segments(), seed or 0)
        series = series.with_missing_blocks(())
    save_csv(series, out.path("series.csv"))
    save_csv(series, out.path("truth.csv"), include_missing_values=True)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rlensemble", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("train", "fit forecasters and the weight controller; write artifacts"),
        ("forecast", "predict the test indices from saved artifacts"),
        ("compare", "run every strategy over the configured seeds and write a report"),
        ("synth", "write a synthetic series and its truth as CSV"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", metavar="PATH", help="run config or manifest (JSON)")
        p.add_argument("--seed", type=int, metavar="N", help="use this single seed")
        p.add_argument("--out", metavar="DIR", help="output directory")
        p.add_argument("--strategy", metavar="NAME", help="rl, online-nn, static, uniform or single:<model>")
        p.add_argument("--feedback", choices=("true-value", "proxy"), help="error signal used during online inference")
        if name == "forecast":
            p.add_argument("--artifacts", metavar="DIR", help="directory written by train (default: the config's output_dir)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = None
    cfg = None
    try:
        if args.command == "synth":
            cfg = _resolve(args) if args.config else None
            out = Outputs(Path(args.out or (cfg.output_dir if cfg else "synth_out")))
            code = cmd_synth(cfg, out, args.seed)
        else:
            cfg = _resolve(args)
            out = Outputs(Path(cfg.output_dir))
            if args.command == "train":
                code = cmd_train(cfg, out)
            elif args.command == "forecast":
                artifacts = Path(args.artifacts) if args.artifacts else Path(read_config(args.config).output_dir)
                code = cmd_forecast(cfg, out, artifacts, args.strategy or "rl")
            else:
                code = cmd_compare(cfg, out, args.strategy)
        out.manifest(args.command, cfg, cfg.seeds if cfg else args.seed, "ok" if code == 0 else "failed")
        return code
    except RLEnsembleError as exc:
        msg = f"{type(exc).__name__}: {exc}"
        print(f"error: {msg}", file=sys.stderr)
        if out is not None:
            try:
                out.manifest(args.command, cfg, cfg.seeds if cfg else args.seed, "failed", msg)
            except RLEnsembleError:
                pass
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
