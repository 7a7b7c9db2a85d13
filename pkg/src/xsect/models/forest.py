"""Random-forest regression: bagged CART trees grown from scratch.

Each split draws max_features candidate features without replacement,
evaluates every midpoint between consecutive distinct sorted values, and
keeps the split with the lowest total sum of squared errors. Leaves predict
the sample mean. Per-tree random streams are derived from (seed, tree
index) so fitting is reproducible regardless of evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..preprocess import TrainingWindow


@dataclass(frozen=True)
class ForestConfig:
    n_estimators: int = 1000
    max_features: int = 11
    max_depth: int = 5
    bootstrap: bool = True  # test mode disables resampling

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if self.max_features < 1:
            raise ValueError("max_features must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")


class _Tree:
    """Flat-array CART tree; feature -1 marks a leaf."""

    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int32)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int32)
        self.right = np.asarray(right, dtype=np.int32)
        self.value = np.asarray(value, dtype=float)

    def predict(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(x.shape[0], dtype=np.int32)
        while True:
            feat = self.feature[node]
            active = np.flatnonzero(feat >= 0)
            if active.size == 0:
                return self.value[node]
            xi = x[active, feat[active]]
            go_left = xi <= self.threshold[node[active]]
            node[active] = np.where(go_left, self.left[node[active]], self.right[node[active]])

    def max_depth(self) -> int:
        depth = np.zeros(self.feature.size, dtype=np.int32)
        deepest = 0
        for i in range(self.feature.size):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[i] + 1
                depth[self.right[i]] = depth[i] + 1
            else:
                deepest = max(deepest, int(depth[i]))
        return deepest


def _best_split(x_col: np.ndarray, y: np.ndarray) -> tuple[float, float] | None:
    """Lowest-SSE threshold over midpoints of consecutive distinct values."""
    order = np.argsort(x_col, kind="stable")
    sx = x_col[order]
    sy = y[order]
    boundaries = np.flatnonzero(sx[1:] != sx[:-1])
    if boundaries.size == 0:
        return None
    cum_y = np.cumsum(sy)
    cum_y2 = np.cumsum(sy * sy)
    tot_y = cum_y[-1]
    tot_y2 = cum_y2[-1]
    n = sy.size
    n_left = boundaries + 1
    n_right = n - n_left
    sse_left = cum_y2[boundaries] - cum_y[boundaries] ** 2 / n_left
    sse_right = (tot_y2 - cum_y2[boundaries]) - (tot_y - cum_y[boundaries]) ** 2 / n_right
    total = sse_left + sse_right
    best = int(np.argmin(total))
    b = boundaries[best]
    threshold = 0.5 * (sx[b] + sx[b + 1])
    return float(total[best]), threshold


def _grow_tree(x: np.ndarray, y: np.ndarray, config: ForestConfig, rng: np.random.Generator) -> _Tree:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    n_features = x.shape[1]
    m = min(config.max_features, n_features)

    def build(idx: np.ndarray, depth: int) -> int:
        node = len(feature)
        feature.append(-1)
        threshold.append(np.nan)
        left.append(-1)
        right.append(-1)
        y_node = y[idx]
        value.append(float(y_node.mean()))
        if depth >= config.max_depth or idx.size < 2 or np.all(y_node == y_node[0]):
            return node
        best = None
        for f in rng.choice(n_features, size=m, replace=False):
            split = _best_split(x[idx, f], y_node)
            if split is not None and (best is None or split[0] < best[0]):
                best = (split[0], int(f), split[1])
        if best is None:
            return node
        _, f, thr = best
        go_left = x[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left[node] = build(idx[go_left], depth + 1)
        right[node] = build(idx[~go_left], depth + 1)
        return node

    build(np.arange(x.shape[0]), 0)
    return _Tree(feature, threshold, left, right, value)


class ForestPredictor:
    kind = "forest"

    def __init__(self, trees: list[_Tree], n_features: int, config: ForestConfig, seed: int):
        self.trees = trees
        self._n_features = n_features
        self.config = config
        self.seed = seed

    @property
    def n_features(self) -> int:
        return self._n_features

    def predict(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        if features.ndim != 2 or features.shape[1] != self.n_features:
            raise ValueError(
                f"feature dimension must be {self.n_features}, got {features.shape}"
            )
        preds = np.stack([tree.predict(features) for tree in self.trees])
        return preds.mean(axis=0)


def forest_fit(window: TrainingWindow, config: ForestConfig, seed: int) -> ForestPredictor:
    x = np.asarray(window.features, dtype=float)
    y = np.asarray(window.targets, dtype=float)
    if y.size < 2:
        raise ValueError("forest_fit needs at least two samples")
    if seed < 0:
        raise ValueError("seed must be non-negative")
    trees = []
    for i in range(config.n_estimators):
        rng = np.random.default_rng([seed, i])
        if config.bootstrap:
            idx = rng.integers(0, y.size, size=y.size)
            trees.append(_grow_tree(x[idx], y[idx], config, rng))
        else:
            trees.append(_grow_tree(x, y, config, rng))
    return ForestPredictor(trees=trees, n_features=x.shape[1], config=config, seed=seed)
