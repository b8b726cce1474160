"""Random forest regressor: bagged variance-reduction trees."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .linear import flatten


@dataclass
class RegressionTree:
    max_depth: int = 8
    min_samples_leaf: int = 5
    max_features: Optional[int] = None
    # flat node arrays; feature -1 marks a leaf
    feature: List[int] = field(default_factory=list)
    threshold: List[float] = field(default_factory=list)
    left: List[int] = field(default_factory=list)
    right: List[int] = field(default_factory=list)
    value: List[float] = field(default_factory=list)

    def _new_node(self, value: float) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return len(self.value) - 1

    def _best_split(self, X, y, features):
        n = len(y)
        leaf = self.min_samples_leaf
        best = (None, None, -np.inf)
        total = y.sum()
        for f in features:
            order = np.argsort(X[:, f], kind="stable")
            xs = X[order, f]
            ys = y[order]
            csum = np.cumsum(ys)[:-1]
            n_left = np.arange(1, n)
            valid = xs[1:] > xs[:-1]
            valid[: leaf - 1] = False
            if leaf > 1:
                valid[n - leaf:] = False
            if not valid.any():
                continue
            # maximizing this is equivalent to minimizing child SSE
            gain = csum ** 2 / n_left + (total - csum) ** 2 / (n - n_left)
            gain = np.where(valid, gain, -np.inf)
            i = int(np.argmax(gain))
            if gain[i] > best[2]:
                thr = xs[i] + 0.5 * (xs[i + 1] - xs[i])
                if thr >= xs[i + 1]:   # adjacent floats
                    thr = xs[i]
                best = (f, thr, gain[i])
        return best

    def fit(self, X: np.ndarray, y: np.ndarray, rng: Optional[np.random.Generator] = None) -> "RegressionTree":
        X = flatten(X)
        y = np.asarray(y, dtype=float)
        rng = rng or np.random.default_rng(0)
        n_features = X.shape[1]
        k = self.max_features or n_features
        stack = [(np.arange(len(y)), 0, self._new_node(float(y.mean())))]
        while stack:
            idx, depth, node = stack.pop()
            if depth >= self.max_depth or len(idx) < 2 * self.min_samples_leaf:
                continue
            ys = y[idx]
            if np.all(ys == ys[0]):
                continue
            features = rng.choice(n_features, size=k, replace=False) if k < n_features else range(n_features)
            f, thr, _ = self._best_split(X[idx], ys, features)
            if f is None:
                continue
            mask = X[idx, f] <= thr
            li, ri = idx[mask], idx[~mask]
            self.feature[node] = int(f)
            self.threshold[node] = float(thr)
            self.left[node] = self._new_node(float(y[li].mean()))
            self.right[node] = self._new_node(float(y[ri].mean()))
            stack.append((li, depth + 1, self.left[node]))
            stack.append((ri, depth + 1, self.right[node]))
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = flatten(X)
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        node = np.zeros(len(X), dtype=int)
        active = feature[node] >= 0
        while active.any():
            rows = np.nonzero(active)[0]
            cur = node[rows]
            go_left = X[rows, feature[cur]] <= threshold[cur]
            node[rows] = np.where(go_left, left[cur], right[cur])
            active = feature[node] >= 0
        return np.asarray(self.value)[node]

    @property
    def n_nodes(self) -> int:
        return len(self.value)

    def to_arrays(self) -> np.ndarray:
        return np.array([self.feature, self.threshold, self.left, self.right, self.value], dtype=float)

    @classmethod
    def from_arrays(cls, arr: np.ndarray) -> "RegressionTree":
        tree = cls()
        tree.feature = [int(v) for v in arr[0]]
        tree.threshold = list(map(float, arr[1]))
        tree.left = [int(v) for v in arr[2]]
        tree.right = [int(v) for v in arr[3]]
        tree.value = list(map(float, arr[4]))
        return tree


@dataclass
class RandomForest:
    n_trees: int = 10
    max_depth: int = 8
    min_samples_leaf: int = 5
    bootstrap: bool = True
    max_features: Optional[float] = None   # fraction of features per split
    seed: int = 0
    trees: List[RegressionTree] = field(default_factory=list)

    def fit(self, X: np.ndarray, y: np.ndarray) -> "RandomForest":
        X = flatten(X)
        y = np.asarray(y, dtype=float)
        if len(y) == 0:
            raise ValueError("cannot fit on an empty dataset")
        rng = np.random.default_rng(self.seed)
        k = None
        if self.max_features is not None:
            k = max(1, int(round(self.max_features * X.shape[1])))
        self.trees = []
        for _ in range(self.n_trees):
            idx = rng.integers(0, len(y), len(y)) if self.bootstrap else np.arange(len(y))
            tree = RegressionTree(self.max_depth, self.min_samples_leaf, k)
            self.trees.append(tree.fit(X[idx], y[idx], rng))
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        if not self.trees:
            raise RuntimeError("model is not fitted")
        X = flatten(X)
        return np.mean([t.predict(X) for t in self.trees], axis=0)

    @property
    def n_params(self) -> int:
        return sum(t.n_nodes for t in self.trees)

    def get_params(self) -> Dict[str, np.ndarray]:
        return {f"tree{i}": t.to_arrays() for i, t in enumerate(self.trees)}

    @classmethod
    def from_params(cls, params: Dict[str, np.ndarray], **config) -> "RandomForest":
        forest = cls(**config)
        keys = sorted(params, key=lambda k: int(k[4:]))
        forest.trees = [RegressionTree.from_arrays(params[k]) for k in keys]
        return forest
