"""Driver re-identification from a handful of located signals.

Every aligned window over the four signals becomes one fingerprint made of
the re-id features of each signal. Pairs of drivers are told apart by a
forest under stratified k-fold cross-validation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .config import ForestParams, PipelineConfig
from .decomposer import CandidateSeries, WindowSample, _distinct, normalize, window_bounds, window_slices
from .features import REID_SPEC, FeatureSpec, extract_many
from .learner.forest import train_forest

REID_SIGNALS = ("accelerator", "brake", "velocity", "rpm")
REID_MIN_VARIATION = 1  # a released pedal is flat, and that is behaviour too
MIN_SAMPLES = 50


@dataclass(frozen=True, eq=False)
class DriverSample:
    driver: str
    t_start: float
    t_end: float
    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 1 or not np.all(np.isfinite(self.values)):
            raise ValueError("a driver sample is a finite 1-D vector")


@dataclass(frozen=True)
class ReidResult:
    drivers: tuple[str, str]
    fold_precisions: tuple[float, ...]

    def __post_init__(self):
        if not all(0.0 <= p <= 1.0 for p in self.fold_precisions):
            raise ValueError("precisions must lie in [0, 1]")

    @property
    def mean_precision(self) -> float:
        return float(np.mean(self.fold_precisions))


def feature_names(signals: Sequence[str] = REID_SIGNALS, spec: FeatureSpec = REID_SPEC) -> tuple[str, ...]:
    return tuple(f"{s}.{f}" for s in signals for f in spec.names)


def build_driver_samples(
    signals: Mapping[str, CandidateSeries],
    driver: str,
    config: PipelineConfig = PipelineConfig(),
    order: Sequence[str] = REID_SIGNALS,
    spec: FeatureSpec = REID_SPEC,
    min_variation: int = REID_MIN_VARIATION,
) -> list[DriverSample]:
    """Fingerprints over windows that every signal covers.

    Windows share wall-clock bounds across the signals and are laid out over
    their common time span. A window yields a sample only if each signal has
    at least two values and ``min_variation`` distinct raw values in it.
    Features are concatenated in ``order``.
    """
    missing = [s for s in order if s not in signals]
    if missing:
        raise ValueError(f"missing signals: {missing}")
    series = [signals[s] if signals[s].normalized is not None else normalize(signals[s]) for s in order]
    if any(len(s) == 0 for s in series):
        return []
    t0 = max(float(s.timestamps[0]) for s in series)
    t1 = min(float(s.timestamps[-1]) for s in series)
    starts = window_bounds(t0, t1, config.window_s, config.overlap)
    if len(starts) == 0:
        return []

    keep = np.ones(len(starts), dtype=bool)
    slices = []
    for s in series:
        lo, hi = window_slices(s.timestamps, starts, config.window_s)
        keep &= hi - lo >= 2
        slices.append((lo, hi))
    if min_variation > 1:
        for s, (lo, hi) in zip(series, slices):
            for i in np.flatnonzero(keep):
                keep[i] = _distinct(s.raw[lo[i] : hi[i]]) >= min_variation

    idx = np.flatnonzero(keep)
    blocks = []
    for s, (lo, hi) in zip(series, slices):
        wins = [
            WindowSample(s.key, float(starts[i]), float(starts[i]) + config.window_s, s.normalized[lo[i] : hi[i]], 0)
            for i in idx
        ]
        blocks.append(extract_many(wins, spec) if wins else np.empty((0, len(spec))))
    X = np.hstack(blocks)
    return [
        DriverSample(driver, float(starts[i]), float(starts[i]) + config.window_s, X[r])
        for r, i in enumerate(idx)
    ]


def fold_assignment(n_a: int, n_b: int, folds: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Shuffled round-robin folds, stratified by driver."""
    fa = np.empty(n_a, dtype=np.int64)
    fb = np.empty(n_b, dtype=np.int64)
    fa[rng.permutation(n_a)] = np.arange(n_a) % folds
    fb[rng.permutation(n_b)] = np.arange(n_b) % folds
    return fa, fb


def _precision(pred: np.ndarray, truth: np.ndarray) -> float:
    # no positive calls: counted as 0, not skipped
    called = int(pred.sum())
    return float((pred & truth).sum()) / called if called else 0.0


def pairwise_reid(
    samples_a: Sequence[DriverSample],
    samples_b: Sequence[DriverSample],
    seed: int = 0,
    folds: int = 10,
    params: ForestParams = ForestParams(),
    threads: int = 1,
) -> ReidResult:
    """k-fold precision of a forest telling driver A from driver B.

    Each fold trains a balanced forest on the other folds with A as the
    positive class. Its precision on the held-out fold is averaged over both
    class roles (A called A, B called B).
    """
    if len(samples_a) < MIN_SAMPLES or len(samples_b) < MIN_SAMPLES:
        raise ValueError(f"each driver needs at least {MIN_SAMPLES} samples")
    if folds < 2:
        raise ValueError("folds must be >= 2")
    A = np.stack([s.values for s in samples_a])
    B = np.stack([s.values for s in samples_b])
    if A.shape[1] != B.shape[1]:
        raise ValueError("drivers have different fingerprint lengths")
    ss = np.random.SeedSequence(seed)
    fold_ss, forest_ss = ss.spawn(2)
    fa, fb = fold_assignment(len(A), len(B), folds, np.random.default_rng(fold_ss))
    forest_seeds = forest_ss.generate_state(folds)

    precisions = []
    for k in range(folds):
        forest = train_forest(A[fa != k], B[fb != k], params, int(forest_seeds[k]), threads=threads)
        X = np.concatenate([A[fa == k], B[fb == k]])
        is_a = np.concatenate([np.ones((fa == k).sum(), bool), np.zeros((fb == k).sum(), bool)])
        said_a = forest.predict(X)
        precisions.append((_precision(said_a, is_a) + _precision(~said_a, ~is_a)) / 2)
    return ReidResult((samples_a[0].driver, samples_b[0].driver), tuple(precisions))


def control_split(samples: Sequence[DriverSample], seed: int = 0) -> tuple[list[DriverSample], list[DriverSample]]:
    """One driver's samples split at random into two pseudo-drivers.

    Both halves come from the same distribution, so a sound pipeline can
    only score chance on them.
    """
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(samples))
    half = len(samples) // 2
    name = samples[0].driver if samples else "driver"

    def relabel(idx, tag):
        return [DriverSample(f"{name}/{tag}", samples[i].t_start, samples[i].t_end, samples[i].values) for i in sorted(idx)]

    return relabel(perm[:half], "a"), relabel(perm[half:], "b")


@dataclass(frozen=True)
class CohortSummary:
    mean: float
    worst: float
    best: float
    pairs: int


def cohort_reid(
    drivers: Mapping[str, Sequence[DriverSample]],
    k: int = 5,
    seed: int = 0,
    folds: int = 10,
    params: ForestParams = ForestParams(),
    threads: int = 1,
) -> list[ReidResult]:
    """Pick ``k`` drivers at random and run every pair."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if len(drivers) < k:
        raise ValueError(f"need at least {k} drivers, got {len(drivers)}")
    ss = np.random.SeedSequence(seed)
    pick_ss, pair_ss = ss.spawn(2)
    names = sorted(drivers)
    chosen = sorted(names[i] for i in np.random.default_rng(pick_ss).choice(len(names), k, replace=False))
    pairs = list(itertools.combinations(chosen, 2))
    seeds = pair_ss.generate_state(len(pairs))
    return [
        pairwise_reid(drivers[a], drivers[b], int(s), folds, params, threads)
        for (a, b), s in zip(pairs, seeds)
    ]


def summarize(results: Sequence[ReidResult]) -> CohortSummary:
    if not results:
        raise ValueError("no results to summarize")
    m = [r.mean_precision for r in results]
    return CohortSummary(float(np.mean(m)), float(min(m)), float(max(m)), len(m))
