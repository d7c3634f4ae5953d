"""Random forests of CART trees for one-vs-rest signal classes."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..config import ForestParams
from .tree import DecisionTree, train_tree


@dataclass(frozen=True, eq=False)
class Forest:
    trees: tuple[DecisionTree, ...]
    params: ForestParams
    seed: int
    feature_names: tuple[str, ...]
    label: str = "positive"
    oob_score: float | None = None
    samples_per_class: int = 0

    def __len__(self) -> int:
        return len(self.trees)

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features

    def votes(self, X: np.ndarray) -> np.ndarray:
        """Number of trees voting positive for each row."""
        X = np.asarray(X, dtype=np.float64)
        out = np.zeros(len(X), dtype=np.int64)
        for tree in self.trees:
            out += tree.predict(X)
        return out

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return sum(t.predict_proba(X) for t in self.trees) / len(self.trees)

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Majority of hard tree votes; an even split goes to the mean leaf probability, then to negative."""
        v = 2 * self.votes(X)
        n = len(self.trees)
        out = v > n
        tie = v == n
        if tie.any():
            out[tie] = self.predict_proba(np.asarray(X)[tie]) > 0.5
        return out


def balance(
    positives: np.ndarray,
    negatives: np.ndarray,
    rng: np.random.Generator,
    size: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``size`` rows from each class (default: the smaller class size).

    A class larger than ``size`` is subsampled without replacement (order
    kept); a smaller one is resampled with replacement. Returns the stacked
    rows (positives first) and their labels.
    """
    m = min(len(positives), len(negatives)) if size is None else size
    if m < 1:
        raise ValueError("balanced size must be >= 1")

    def draw(rows):
        if len(rows) == m:
            return rows
        if len(rows) > m:
            return rows[np.sort(rng.choice(len(rows), m, replace=False))]
        return rows[np.sort(rng.integers(0, len(rows), m))]

    X = np.concatenate([draw(positives), draw(negatives)])
    y = np.concatenate([np.ones(m, dtype=bool), np.zeros(m, dtype=bool)])
    return X, y


def train_forest(
    positives: np.ndarray,
    negatives: np.ndarray,
    params: ForestParams = ForestParams(),
    seed: int = 0,
    feature_names: tuple[str, ...] = (),
    label: str = "positive",
    threads: int = 1,
) -> Forest:
    """Balanced, bootstrapped forest.

    Each tree draws the same number of rows from both classes
    (``params.samples_per_class``, by default the smaller class size) and
    trains on a bootstrap of that balanced set, so together the trees see far
    more of a large negative pool than one shared subsample would. Every tree
    draws from its own generator spawned off ``seed``, so the forest is
    identical for any ``threads``.
    """
    positives = np.atleast_2d(np.asarray(positives, dtype=np.float64))
    negatives = np.atleast_2d(np.asarray(negatives, dtype=np.float64))
    if positives.size == 0 or negatives.size == 0:
        raise ValueError("both classes need at least one sample")
    if positives.shape[1] != negatives.shape[1]:
        raise ValueError("positives and negatives differ in feature count")
    d = positives.shape[1]
    if feature_names and len(feature_names) != d:
        raise ValueError("feature_names does not match the feature count")

    tree_seeds = np.random.SeedSequence(seed).spawn(params.n_trees)
    X = np.concatenate([positives, negatives])
    y = np.concatenate([np.ones(len(positives), dtype=bool), np.zeros(len(negatives), dtype=bool)])
    pos_idx, neg_idx = np.arange(len(positives)), len(positives) + np.arange(len(negatives))
    m = params.samples_per_class or min(len(positives), len(negatives))

    def build(ss):
        # each tree draws its own balanced subset, then bootstraps it
        rng = np.random.default_rng(ss)
        Xb, yb = balance(pos_idx, neg_idx, rng, m)
        rows = Xb[rng.integers(0, len(Xb), len(Xb))] if params.bootstrap else Xb
        assert yb.sum() * 2 == len(yb), "training set is not balanced"
        tree = train_tree(X[rows], y[rows], params.max_depth, params.min_samples_leaf, params.features_per_split, rng)
        return tree, rows

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            built = list(pool.map(build, tree_seeds))
    else:
        built = [build(ss) for ss in tree_seeds]

    trees = tuple(t for t, _ in built)
    oob = _oob_score(X, y, built) if params.bootstrap else None
    names = tuple(feature_names) or tuple(f"f{i}" for i in range(d))
    return Forest(trees, params, seed, names, label, oob, m)


def _oob_score(X: np.ndarray, y: np.ndarray, built) -> float | None:
    pos = np.zeros(len(X))
    cnt = np.zeros(len(X))
    for tree, rows in built:
        out = np.ones(len(X), dtype=bool)
        out[rows] = False
        if out.any():
            pos[out] += tree.predict(X[out])
            cnt[out] += 1
    seen = cnt > 0
    if not seen.any():
        return None
    pred = 2 * pos[seen] > cnt[seen]
    return float(np.mean(pred == y[seen]))


def feature_importances(forest: Forest) -> list[tuple[str, float]]:
    """Mean impurity decrease per feature, normalised to sum to 1, largest first."""
    total = np.zeros(forest.n_features)
    for tree in forest.trees:
        if tree.importance is not None:
            total += tree.importance
    total /= len(forest.trees)
    s = total.sum()
    if s > 0:
        total = total / s
    ranked = sorted(zip(forest.feature_names, total.tolist()), key=lambda p: (-p[1], p[0]))
    return ranked
