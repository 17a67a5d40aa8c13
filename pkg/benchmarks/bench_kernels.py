"""Compare the compiled and pure-Python kernel backends.

Times one actor-critic training episode and one best-split search on the
same inputs with each backend, checks that both give the same results and
prints a table. Run from the repository root:

    python benchmarks/bench_kernels.py --repeat 5
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

from rlensemble.kernels import get_backend


def episode_inputs(rng, steps, n_models, n_buckets):
    truth = 3.0 + rng.normal(0.0, 0.5, size=steps)
    preds = truth[:, None] + rng.normal(0.0, 0.3, size=(steps, n_models))
    noise = rng.standard_normal((steps, n_models))
    theta = rng.normal(0.0, 0.1, size=(n_buckets, n_models))
    return theta, preds, truth, noise


def run_episode_once(backend, theta, preds, truth, noise):
    n_buckets, m = theta.shape
    k = preds.shape[0]
    th = theta.copy()
    values = np.zeros(n_buckets)
    raw = np.zeros(k + 1)
    buckets = np.zeros(k + 1, dtype=np.int64)
    rewards = np.zeros(k)
    weights = np.zeros((k, m))
    degenerate = np.zeros(k + 1, dtype=np.uint8)
    backend.run_episode(th, values, preds, truth, noise, 0.5, 0.05, 0.1, 0.9,
                        -1, 1e-8, 1.0, 0, raw, buckets, rewards, weights, degenerate)
    return th, values, raw, weights


def split_inputs(rng, rows, n_features):
    X = rng.normal(size=(rows, n_features))
    y = X[:, 0] - 0.5 * X[:, 1] ** 2 + rng.normal(0.0, 0.1, size=rows)
    features = np.arange(n_features, dtype=np.int64)
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T.astype(np.int64))
    return X, y, features, order


def timed(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=980, help="steps per training episode")
    ap.add_argument("--models", type=int, default=4)
    ap.add_argument("--buckets", type=int, default=10)
    ap.add_argument("--rows", type=int, default=4000, help="rows for the split search")
    ap.add_argument("--features", type=int, default=5)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", action="store_true", help="print results as JSON")
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    ep = episode_inputs(rng, args.steps, args.models, args.buckets)
    sp = split_inputs(rng, args.rows, args.features)

    try:
        compiled = get_backend("cython")
    except ImportError:
        compiled = None
    backends = {"python": get_backend("python")}
    if compiled is not None:
        backends["cython"] = compiled

    results = {}
    outputs = {}
    for name, mod in backends.items():
        t_ep, out_ep = timed(lambda: run_episode_once(mod, *ep), args.repeat)
        t_sp, out_sp = timed(lambda: mod.best_split(sp[0], sp[1], sp[2], sp[3], 5), args.repeat)
        results[name] = {"run_episode_s": t_ep, "per_step_us": 1e6 * t_ep / args.steps, "best_split_s": t_sp}
        outputs[name] = (out_ep, out_sp)

    if "cython" in outputs:
        (a_ep, a_sp), (b_ep, b_sp) = outputs["python"], outputs["cython"]
        ep_diff = max(float(np.max(np.abs(x - y))) for x, y in zip(a_ep, b_ep))
        results["agreement"] = {
            "run_episode_max_abs_diff": ep_diff,
            "best_split_same_feature_and_position": a_sp[:2] == b_sp[:2],
            "best_split_score_diff": abs(a_sp[3] - b_sp[3]),
        }
        for key in ("run_episode_s", "best_split_s"):
            results.setdefault("speedup", {})[key] = results["python"][key] / results["cython"][key]

    if args.json:
        print(json.dumps(results, indent=2))
        return 0
    print(f"{'backend':<8} {'episode (s)':>12} {'per step (us)':>14} {'best_split (s)':>15}")
    for name in backends:
        r = results[name]
        print(f"{name:<8} {r['run_episode_s']:>12.5f} {r['per_step_us']:>14.2f} {r['best_split_s']:>15.5f}")
    if "speedup" in results:
        s = results["speedup"]
        print(f"speedup  episode x{s['run_episode_s']:.1f}, best_split x{s['best_split_s']:.1f}")
        print(f"agreement {results['agreement']}")
    else:
        print("compiled backend not built; only the Python fallback was timed")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
