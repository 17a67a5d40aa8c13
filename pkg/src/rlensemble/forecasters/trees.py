from __future__ import annotations

import numpy as np

from .. import kernels
from .base import Forecaster, ForecasterSpec, sub_rng


class RegressionTree:
    """Array-backed binary regression tree; ``feature == -1`` marks a leaf."""

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)

    @property
    def depth(self) -> int:
        def walk(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))

        return walk(0)

    @classmethod
    def grow(cls, X, y, max_depth, min_leaf, max_features=None, rng=None):
        n, d = X.shape
        feature, threshold, left, right, value = [], [], [], [], []
        all_features = np.arange(d, dtype=np.int64)

        def new_node(rows):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(float(np.mean(y[rows])))
            return len(feature) - 1

        root = new_node(np.arange(n))
        stack = [(root, np.arange(n, dtype=np.int64), 0)]
        while stack:
            node, rows, depth = stack.pop()
            if depth >= max_depth or rows.size < 2 * min_leaf:
                continue
            feats = all_features
            if max_features is not None and max_features < d:
                feats = np.sort(rng.choice(d, size=max_features, replace=False)).astype(np.int64)
            order = np.empty((feats.size, rows.size), dtype=np.int64)
            for j, f in enumerate(feats):
                order[j] = rows[np.argsort(X[rows, f], kind="stable")]
            f, pos, thr, score = kernels.best_split(X, y, feats, order, min_leaf)
            ys = y[rows]
            if f < 0 or score <= 1e-12 * max(float(ys @ ys), 1e-300):
                continue
            go_left = X[rows, f] <= thr
            lrows, rrows = rows[go_left], rows[~go_left]
            if lrows.size < min_leaf or rrows.size < min_leaf:
                continue
            feature[node], threshold[node] = int(f), float(thr)
            left[node] = new_node(lrows)
            right[node] = new_node(rrows)
            stack.append((right[node], rrows, depth + 1))
            stack.append((left[node], lrows, depth + 1))
        return cls(feature, threshold, left, right, value)

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        n = X.shape[0]
        node = np.zeros(n, dtype=np.int64)
        rows = np.arange(n)
        while True:
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                return self.value[node]
            x = X[rows, np.where(internal, f, 0)]
            nxt = np.where(x <= self.threshold[node], self.left[node], self.right[node])
            node = np.where(internal, nxt, node)

    def to_nested(self, i: int = 0) -> dict:
        if self.feature[i] < 0:
            return {"value": float(self.value[i])}
        return {
            "feature": int(self.feature[i]),
            "threshold": float(self.threshold[i]),
            "value": float(self.value[i]),
            "left": self.to_nested(int(self.left[i])),
            "right": self.to_nested(int(self.right[i])),
        }

    @classmethod
    def from_nested(cls, d: dict) -> "RegressionTree":
        feature, threshold, left, right, value = [], [], [], [], []

        def add(node):
            i = len(feature)
            feature.append(node.get("feature", -1) if "left" in node else -1)
            threshold.append(node.get("threshold", 0.0))
            value.append(node["value"])
            left.append(-1)
            right.append(-1)
            if "left" in node:
                left[i] = add(node["left"])
                right[i] = add(node["right"])
            return i

        add(d)
        return cls(feature, threshold, left, right, value)


def canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Row permutation that depends only on row contents, not their input order."""
    keys = [y] + [X[:, j] for j in range(X.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


class BaggedTreesForecaster(Forecaster):
    """Bootstrap-aggregated regression trees on lag windows."""

    kind = "bagged-trees"

    def __init__(self, spec: ForecasterSpec, trees: list[RegressionTree], oob: dict[bytes, float] | None = None):
        super().__init__(spec)
        self.trees = trees
        self.oob = oob or {}

    @classmethod
    def fit_windows(cls, spec: ForecasterSpec, X: np.ndarray, y: np.ndarray) -> "BaggedTreesForecaster":
        hp = spec.hyperparams
        perm = canonical_order(X, y)
        X = np.ascontiguousarray(X[perm], dtype=float)
        y = np.ascontiguousarray(y[perm], dtype=float)
        n = len(y)
        trees = []
        oob_sum, oob_count = np.zeros(n), np.zeros(n, dtype=np.int64)
        for j in range(hp["n_trees"]):
            rng = sub_rng(spec.seed, f"{spec.label}/tree{j}")
            if hp["bootstrap"]:
                sample = np.sort(rng.integers(0, n, size=n))
                Xb, yb = np.ascontiguousarray(X[sample]), np.ascontiguousarray(y[sample])
            else:
                sample = np.arange(n)
                Xb, yb = X, y
            tree = RegressionTree.grow(Xb, yb, hp["max_depth"], hp["min_samples_leaf"], hp["max_features"], rng)
            trees.append(tree)
            out = np.ones(n, dtype=bool)
            out[sample] = False
            if out.any():
                oob_sum[out] += tree.predict(X[out])
                oob_count[out] += 1
        oob = {}
        for i in np.flatnonzero(oob_count):
            # duplicate windows keep the first row's estimate
            oob.setdefault(X[i].tobytes(), float(oob_sum[i] / oob_count[i]))
        return cls(spec, trees, oob)

    def predict_in_sample(self, X):
        """Out-of-bag averages for windows seen in training, ordinary predictions otherwise."""
        X = np.ascontiguousarray(X, dtype=float)
        pred = self.predict_batch(X)
        if self.oob:
            for i in range(X.shape[0]):
                v = self.oob.get(X[i].tobytes())
                if v is not None:
                    pred[i] = v
        return pred

    def predict_batch(self, X):
        X = np.asarray(X, dtype=float)
        total = np.zeros(X.shape[0])
        for tree in self.trees:
            total += tree.predict(X)
        return total / len(self.trees)

    def params_to_dict(self):
        keys = sorted(self.oob)
        return {
            "trees": [t.to_nested() for t in self.trees],
            "oob_windows": [np.frombuffer(k, dtype=float).tolist() for k in keys],
            "oob_values": [self.oob[k] for k in keys],
        }

    @classmethod
    def from_params(cls, spec, params):
        oob = {
            np.asarray(w, dtype=float).tobytes(): float(v)
            for w, v in zip(params.get("oob_windows", []), params.get("oob_values", []))
        }
        return cls(spec, [RegressionTree.from_nested(t) for t in params["trees"]], oob)
