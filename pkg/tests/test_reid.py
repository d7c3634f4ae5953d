import numpy as np
import pytest

from canlift.config import ForestParams
from canlift.decomposer import CandidateKey, CandidateSeries, normalize
from canlift.reid import (
    MIN_SAMPLES,
    REID_SIGNALS,
    DriverSample,
    build_driver_samples,
    cohort_reid,
    control_split,
    feature_names,
    fold_assignment,
    pairwise_reid,
    summarize,
)

SMALL = ForestParams(n_trees=15)


def fake_driver(name, centre, n=80, d=6, seed=0):
    rng = np.random.default_rng(seed)
    return [DriverSample(name, float(i), float(i) + 2.5, rng.normal(centre, 1.0, d)) for i in range(n)]


def signal_series(seed, t0=0.0, duration=60.0, hz=50.0):
    rng = np.random.default_rng(seed)
    t = t0 + np.arange(int(duration * hz)) / hz
    raw = np.round(100 + 80 * np.sin(t / 3.0 + seed) + rng.normal(0, 5, len(t))).astype(np.int64)
    return normalize(CandidateSeries(CandidateKey(0x100 + seed, 0), t, np.clip(raw, 0, 255)))


def test_fingerprint_layout():
    names = feature_names()
    assert len(names) == 44
    assert names[0].startswith(REID_SIGNALS[0]) and names[-1].startswith(REID_SIGNALS[-1])


def test_driver_samples_cover_the_common_span():
    signals = {name: signal_series(k, t0=float(k)) for k, name in enumerate(REID_SIGNALS)}
    samples = build_driver_samples(signals, "d1")
    assert samples and all(len(s.values) == 44 for s in samples)
    assert samples[0].t_start == 3.0  # latest start among the four signals
    assert all(s.t_end <= 60.0 + 1e-9 for s in samples)
    assert all(s.driver == "d1" for s in samples)


def test_missing_signal_is_an_error():
    signals = {name: signal_series(k) for k, name in enumerate(REID_SIGNALS[:3])}
    with pytest.raises(ValueError, match="rpm"):
        build_driver_samples(signals, "d1")


def test_sample_must_be_a_finite_vector():
    with pytest.raises(ValueError):
        DriverSample("x", 0.0, 1.0, np.array([1.0, np.nan]))
    with pytest.raises(ValueError):
        DriverSample("x", 0.0, 1.0, np.zeros((2, 2)))


def test_folds_partition_each_driver_evenly():
    fa, fb = fold_assignment(53, 71, 10, np.random.default_rng(0))
    for f in (fa, fb):
        counts = np.bincount(f, minlength=10)
        assert counts.max() - counts.min() <= 1


def test_distinct_drivers_are_told_apart():
    res = pairwise_reid(fake_driver("a", 0.0, seed=1), fake_driver("b", 2.0, seed=2), seed=3, params=SMALL)
    assert len(res.fold_precisions) == 10
    assert res.mean_precision > 0.9
    assert res.drivers == ("a", "b")
    swapped = pairwise_reid(fake_driver("b", 2.0, seed=2), fake_driver("a", 0.0, seed=1), seed=3, params=SMALL)
    assert swapped.mean_precision == pytest.approx(res.mean_precision, abs=0.05)


def test_same_driver_scores_chance():
    a, b = control_split(fake_driver("a", 0.0, n=200, seed=4), seed=0)
    assert {s.driver for s in a} == {"a/a"} and len(a) == len(b) == 100
    res = pairwise_reid(a, b, seed=1, params=SMALL)
    assert 0.3 < res.mean_precision < 0.7


def test_reid_is_deterministic():
    a, b = fake_driver("a", 0.0, seed=1), fake_driver("b", 0.7, seed=2)
    assert pairwise_reid(a, b, 5, params=SMALL) == pairwise_reid(a, b, 5, params=SMALL, threads=2)


def test_too_few_samples():
    with pytest.raises(ValueError):
        pairwise_reid(fake_driver("a", 0.0, n=MIN_SAMPLES - 1), fake_driver("b", 1.0))
    with pytest.raises(ValueError):
        pairwise_reid(fake_driver("a", 0.0), fake_driver("b", 1.0), folds=1)


def test_cohort_pair_counts():
    drivers = {f"d{i}": fake_driver(f"d{i}", float(i), n=60, d=3, seed=i) for i in range(6)}
    two = cohort_reid(drivers, k=2, seed=0, folds=3, params=ForestParams(n_trees=5))
    assert len(two) == 1
    five = cohort_reid(drivers, k=5, seed=0, folds=3, params=ForestParams(n_trees=5))
    assert len(five) == 10
    s = summarize(five)
    assert s.pairs == 10 and s.worst <= s.mean <= s.best
    with pytest.raises(ValueError):
        cohort_reid(drivers, k=7)
    with pytest.raises(ValueError):
        summarize([])
