import numpy as np
import pytest

from canlift.config import ForestParams, PipelineConfig
from canlift.decomposer import CandidateKey
from canlift.learner import (
    ConfigMismatch,
    ModelFormatError,
    WindowTable,
    load_model,
    locate_signal,
    model_bytes,
    model_from_bytes,
    save_model,
    train_signal_model,
)

KEYS = tuple(CandidateKey(0x100 + i, 0) for i in range(4))


def table(seed, n_per=40):
    rng = np.random.default_rng(seed)
    X = np.concatenate([rng.normal(1.0, 0.2, (n_per, 3))] + [rng.normal(0.0, 0.2, (n_per, 3)) for _ in range(3)])
    return WindowTable(KEYS, np.repeat(np.arange(4), n_per), np.zeros(4 * n_per), X, ("a", "b", "c"))


@pytest.fixture(scope="module")
def model():
    cfg = PipelineConfig(forest=ForestParams(n_trees=8, samples_per_class=60), seed=4)
    return train_signal_model(table(0), "velocity", KEYS[0], cfg)


def test_round_trip_preserves_votes_and_bytes(model, tmp_path):
    path = tmp_path / "m.bin"
    save_model(model, path)
    again = load_model(path)
    assert again.signal == "velocity"
    assert again.config == model.config
    assert again.forest.feature_names == model.forest.feature_names
    probe = np.random.default_rng(1).normal(0.5, 0.5, (200, 3))
    assert np.array_equal(again.forest.votes(probe), model.forest.votes(probe))
    assert np.array_equal(again.forest.predict_proba(probe), model.forest.predict_proba(probe))
    assert model_bytes(again) == path.read_bytes()
    assert locate_signal(again, table(1)) == locate_signal(model, table(1))


def test_bad_magic(model):
    data = model_bytes(model)
    with pytest.raises(ModelFormatError):
        model_from_bytes(b"X" + data[1:])


@pytest.mark.parametrize("cut", [10, 100, -1, -9])
def test_truncation_detected(model, cut):
    data = model_bytes(model)
    with pytest.raises(ModelFormatError):
        model_from_bytes(data[:cut])


def test_trailing_bytes_detected(model):
    with pytest.raises(ModelFormatError):
        model_from_bytes(model_bytes(model) + b"\0")


def test_expected_hash(model):
    data = model_bytes(model)
    assert model_from_bytes(data, expect_hash=model.config_hash).signal == "velocity"
    with pytest.raises(ConfigMismatch):
        model_from_bytes(data, expect_hash=PipelineConfig().hash)
