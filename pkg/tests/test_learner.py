import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from canlift.config import ForestParams, PipelineConfig
from canlift.decomposer import CandidateKey
from canlift.learner import (
    CandidateVotes,
    ConfigMismatch,
    MatchReport,
    WindowTable,
    balance,
    evaluate,
    feature_importances,
    locate_signal,
    rank_candidates,
    train_forest,
    train_signal_model,
    train_tree,
    vote_gap,
)
from canlift.learner.tree import LEAF

K = [CandidateKey(0x100 + i, 0) for i in range(6)]


def test_tree_one_dimensional_split():
    X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    y = np.array([False, False, True, True])
    tree = train_tree(X, y, min_samples_leaf=1)
    assert tree.depth == 1
    assert tree.threshold[0] == 0.0
    assert np.array_equal(tree.predict(X), y)


def test_tree_pure_input_is_one_leaf():
    tree = train_tree(np.random.default_rng(0).random((10, 3)), np.ones(10, bool))
    assert len(tree) == 1 and tree.feature[0] == LEAF


def test_tree_xor_needs_depth_two():
    X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    y = np.array([False, True, True, False])
    tree = train_tree(X, y, min_samples_leaf=1, rng=np.random.default_rng(1))
    assert tree.depth >= 2
    assert np.array_equal(tree.predict(X), y)
    stump = train_tree(X, y, max_depth=1, min_samples_leaf=1)
    assert not np.array_equal(stump.predict(X), y)


def test_tree_respects_limits():
    rng = np.random.default_rng(3)
    X = rng.random((300, 4))
    y = rng.random(300) < 0.5
    tree = train_tree(X, y, max_depth=3, min_samples_leaf=10, rng=rng)
    assert tree.depth <= 3
    leaves = tree.leaf_index(X)
    assert np.bincount(leaves).max() >= 10
    assert all(np.sum(leaves == leaf) >= 10 for leaf in np.unique(leaves))


def test_tree_rejects_bad_shapes():
    with pytest.raises(ValueError):
        train_tree(np.zeros((0, 2)), np.zeros(0, bool))
    with pytest.raises(ValueError):
        train_tree(np.zeros((3, 2)), np.zeros(2, bool))


def separable(seed, n=200, d=5, margin=1.0):
    """Points on both sides of a random hyperplane, none closer to it than ``margin``."""
    rng = np.random.default_rng(seed)
    w = rng.normal(size=d)
    w /= np.linalg.norm(w)
    X = np.empty((0, d))
    while len(X) < n:
        cand = rng.normal(size=(4 * n, d))
        X = np.concatenate([X, cand[np.abs(cand @ w) >= margin]])
    X = X[:n]
    return X, X @ w > 0


def test_forest_accuracy_on_separable_data():
    for seed in range(10):
        X, y = separable(seed, 400)
        Xtr, ytr, Xte, yte = X[:200], y[:200], X[200:], y[200:]
        f = train_forest(Xtr[ytr], Xtr[~ytr], ForestParams(n_trees=100), seed)
        assert np.mean(f.predict(Xte) == yte) >= 0.98, seed


def test_forest_oob_on_easy_data():
    rng = np.random.default_rng(0)
    pos = rng.normal(3.0, 1.0, (200, 4))
    neg = rng.normal(-3.0, 1.0, (500, 4))
    f = train_forest(pos, neg, ForestParams(n_trees=40), 0)
    assert f.oob_score > 0.95


def test_balance_rule():
    rng = np.random.default_rng(0)
    X, y = balance(np.arange(1000), np.arange(1000, 6000), rng)
    assert len(X) == 2000 and y.sum() == 1000
    assert np.all(X[:1000] < 1000) and np.all(X[1000:] >= 1000)
    X, y = balance(np.arange(10), np.arange(10, 30), rng, size=50)
    assert len(X) == 100 and y.sum() == 50


def test_forest_deterministic_and_thread_independent():
    X, y = separable(5)
    a = train_forest(X[y], X[~y], ForestParams(n_trees=12), seed=9)
    b = train_forest(X[y], X[~y], ForestParams(n_trees=12), seed=9, threads=3)
    probe = np.random.default_rng(1).normal(size=(100, 5))
    assert np.array_equal(a.votes(probe), b.votes(probe))
    assert np.array_equal(a.predict_proba(probe), b.predict_proba(probe))


def test_forest_prediction_ignores_tree_order():
    X, y = separable(6)
    f = train_forest(X[y], X[~y], ForestParams(n_trees=9), seed=2)
    from dataclasses import replace

    g = replace(f, trees=tuple(reversed(f.trees)))
    probe = np.random.default_rng(2).normal(size=(100, 5))
    assert np.array_equal(f.predict(probe), g.predict(probe))


def test_forest_empty_class_is_an_error():
    with pytest.raises(ValueError):
        train_forest(np.zeros((0, 3)), np.ones((5, 3)))


def test_importances():
    rng = np.random.default_rng(0)
    X = rng.random((400, 3))
    y = X[:, 1] > 0.5
    f = train_forest(X[y], X[~y], ForestParams(n_trees=20), 0, ("a", "b", "c"))
    imp = feature_importances(f)
    assert sum(v for _, v in imp) == pytest.approx(1.0, abs=1e-9)
    assert imp[0][0] == "b"
    single = train_forest(X[y][:, 1:2], X[~y][:, 1:2], ForestParams(n_trees=5), 0, ("b",))
    assert feature_importances(single) == [("b", pytest.approx(1.0))]


# --- ranking and metrics --------------------------------------------------------


def test_gap_worked_example():
    # truth takes half of all votes, the best false candidate a fifth
    cands = [CandidateVotes(K[0], 50, 60), CandidateVotes(K[1], 20, 60), CandidateVotes(K[2], 20, 60),
             CandidateVotes(K[3], 10, 60)]
    assert vote_gap(cands, {K[0]}) == 0.30


def test_gap_floors_at_zero():
    cands = [CandidateVotes(K[1], 40, 50), CandidateVotes(K[0], 10, 50)]
    assert vote_gap(cands, {K[0]}) == 0.0


def report(votes_windows, truth=K[0]):
    rows = tuple(sorted((CandidateVotes(K[i], v, w) for i, (v, w) in enumerate(votes_windows)),
                        key=lambda c: (-c.votes, c.key)))
    return MatchReport("x", rows, "h")


def test_perfect_classifier_metrics():
    ev = evaluate(report([(10, 10), (0, 10), (0, 7)]), K[0])
    assert (ev.rank, ev.precision, ev.recall, ev.gap) == (1, 1.0, 1.0, 1.0)


def test_everything_positive_classifier():
    ev = evaluate(report([(10, 10), (30, 30), (60, 60)]), K[0])
    assert ev.recall == 1.0
    assert ev.precision == pytest.approx(10 / 100)
    assert ev.rank == 3


def test_duplicates_of_truth_do_not_hurt_rank():
    r = report([(8, 10), (9, 10), (3, 10)])
    ev = evaluate(r, K[0], true_keys={K[1]})
    assert ev.rank == 1
    assert ev.gap == pytest.approx((9 - 3) / 20)


def test_truth_must_be_ranked():
    with pytest.raises(ValueError):
        evaluate(report([(1, 2)]), K[5])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 50), st.integers(0, 50)), min_size=2, max_size=6), st.integers(0, 5))
def test_metric_ranges(vw, t):
    vw = [(min(v, w), max(w, 1)) for v, w in vw]
    t = t % len(vw)
    ev = evaluate(report(vw), K[t])
    assert 0 <= ev.precision <= 1 and 0 <= ev.recall <= 1 and 0 <= ev.gap <= 1
    assert (ev.gap > 0) == (ev.rank == 1 and report(vw).candidates[0].votes > sorted(v for v, _ in vw)[-2])


def test_rank_candidates_is_order_invariant():
    owner = np.array([0, 0, 1, 1, 1, 2])
    positive = np.array([1, 1, 1, 0, 0, 1], dtype=bool)
    table = WindowTable((K[0], K[1], K[2]), owner, np.zeros(6), np.zeros((6, 1)), ("f",))
    ranked = rank_candidates(table, positive)
    assert [(c.key, c.votes, c.windows) for c in ranked] == [(K[0], 2, 2), (K[1], 1, 3), (K[2], 1, 1)]
    perm = np.array([5, 3, 1, 0, 2, 4])
    again = rank_candidates(WindowTable(table.keys, owner[perm], np.zeros(6), np.zeros((6, 1)), ("f",)), positive[perm])
    assert again == ranked


def toy_table(seed, n_per=40):
    """Candidate 0 carries 'signal' windows (feature near 1), the rest noise near 0."""
    rng = np.random.default_rng(seed)
    keys = tuple(K[:4])
    X = np.concatenate([rng.normal(1.0, 0.1, (n_per, 2))] + [rng.normal(0.0, 0.1, (n_per, 2)) for _ in range(3)])
    owner = np.repeat(np.arange(4), n_per)
    return WindowTable(keys, owner, np.zeros(len(owner)), X, ("a", "b"))


def test_signal_model_locates_truth_and_checks_config():
    cfg = PipelineConfig(forest=ForestParams(n_trees=10))
    model = train_signal_model(toy_table(0), "speed", K[0], cfg)
    rep = locate_signal(model, toy_table(1), truth=K[0])
    assert rep.evaluation.rank == 1 and rep.evaluation.gap > 0.9
    with pytest.raises(ConfigMismatch):
        locate_signal(model, toy_table(1), cfg.with_(overlap=0.5))
    with pytest.raises(ConfigMismatch):
        t = toy_table(1)
        locate_signal(model, WindowTable(t.keys, t.owner, t.t_start, t.X, ("x", "y")))
    with pytest.raises(ValueError):
        locate_signal(model, WindowTable((), np.zeros(0, int), np.zeros(0), np.zeros((0, 2)), ("a", "b")))
