"""CART decision trees for binary labels (Gini impurity)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LEAF = -1


@dataclass(frozen=True, eq=False)
class DecisionTree:
    """Flat node arrays; node 0 is the root.

    Samples with ``x[feature] <= threshold`` go left. ``prob`` is the fraction
    of positive training samples reaching the node; ``feature`` is ``LEAF``
    for leaves.
    """

    feature: np.ndarray  # int32
    threshold: np.ndarray  # float64
    left: np.ndarray  # int32
    right: np.ndarray  # int32
    prob: np.ndarray  # float64
    n_features: int
    max_depth: int = 12
    min_samples_leaf: int = 2
    # impurity decrease credited to each feature, weighted by node size
    importance: np.ndarray | None = None

    def __post_init__(self):
        internal = self.feature != LEAF
        if np.any(self.feature[internal] >= self.n_features):
            raise ValueError("split feature out of range")

    def __len__(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        depth = np.zeros(len(self), dtype=np.int64)
        for i in range(len(self)):
            if self.feature[i] != LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def leaf_index(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            f = self.feature[node]
            inner = f != LEAF
            if not inner.any():
                return node
            r, n = rows[inner], node[inner]
            go_left = X[r, f[inner]] <= self.threshold[n]
            node[inner] = np.where(go_left, self.left[n], self.right[n])

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.prob[self.leaf_index(X)]

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.predict_proba(X) > 0.5


def _best_split(x: np.ndarray, y: np.ndarray, min_leaf: int):
    """(weighted child gini, threshold) of the best cut on one feature, or None."""
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    n = len(xs)
    # candidate cut after position i-1 (left = xs[:i]) for i in [min_leaf, n - min_leaf]
    i = np.arange(min_leaf, n - min_leaf + 1)
    if len(i) == 0:
        return None
    i = i[xs[i - 1] < xs[i]]
    if len(i) == 0:
        return None
    pos_left = np.concatenate(([0], np.cumsum(ys)))[i]
    total = ys.sum()
    nl, nr = i, n - i
    pl = pos_left / nl
    pr = (total - pos_left) / nr
    gini = (nl * 2 * pl * (1 - pl) + nr * 2 * pr * (1 - pr)) / n
    k = int(np.argmin(gini))
    cut = int(i[k])
    thr = (xs[cut - 1] + xs[cut]) / 2
    if thr >= xs[cut]:  # neighbouring floats
        thr = xs[cut - 1]
    return float(gini[k]), float(thr)


def train_tree(
    X: np.ndarray,
    y: np.ndarray,
    max_depth: int = 12,
    min_samples_leaf: int = 2,
    features_per_split: int | None = None,
    rng: np.random.Generator | None = None,
) -> DecisionTree:
    """Greedy CART on boolean labels.

    Each node draws features in random order and evaluates at least
    ``features_per_split`` of them (default ceil(sqrt(d))), continuing past
    that only while none has produced a valid cut. Cuts with zero impurity
    decrease are allowed, so patterns like XOR are still reachable.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(bool)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be (n, d) with one label per row")
    if len(X) == 0:
        raise ValueError("cannot train on zero samples")
    n, d = X.shape
    k = features_per_split or max(1, math.ceil(math.sqrt(d)))
    rng = rng or np.random.default_rng(0)
    yf = y.astype(np.float64)

    feature, threshold, left, right, prob = [], [], [], [], []
    importance = np.zeros(d)

    def new_node(idx) -> int:
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        prob.append(float(yf[idx].mean()))
        return len(feature) - 1

    stack = [(new_node(np.arange(n)), np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        p = prob[node]
        if depth >= max_depth or p in (0.0, 1.0) or len(idx) < 2 * min_samples_leaf:
            continue
        parent_gini = 2 * p * (1 - p)
        best = None
        for tried, f in enumerate(rng.permutation(d), start=1):
            cut = _best_split(X[idx, f], yf[idx], min_samples_leaf)
            if cut is not None and (best is None or cut[0] < best[0]):
                best = (cut[0], cut[1], int(f))
            if tried >= k and best is not None:
                break
        if best is None:
            continue
        gini, thr, f = best
        importance[f] += len(idx) / n * (parent_gini - gini)
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))

    return DecisionTree(
        np.asarray(feature, dtype=np.int32),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int32),
        np.asarray(right, dtype=np.int32),
        np.asarray(prob, dtype=np.float64),
        d, max_depth, min_samples_leaf, importance,
    )
