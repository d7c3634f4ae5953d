"""Tree ensembles, one-vs-rest signal models and vote-based localisation."""

from .forest import Forest, balance, feature_importances, train_forest
from .matching import (
    CandidateVotes,
    ConfigMismatch,
    Evaluation,
    MatchReport,
    SignalModel,
    WindowTable,
    candidates_for,
    evaluate,
    locate_signal,
    rank_candidates,
    train_signal_model,
    vote_gap,
    window_table,
    with_truth,
)
from .modelfile import ModelFormatError, load_model, model_bytes, model_from_bytes, save_model
from .tree import DecisionTree, train_tree

__all__ = [
    "CandidateVotes", "ConfigMismatch", "DecisionTree", "Evaluation", "Forest", "MatchReport",
    "SignalModel", "WindowTable", "balance", "candidates_for", "evaluate", "feature_importances",
    "locate_signal", "rank_candidates", "train_forest", "train_signal_model", "train_tree",
    "vote_gap", "window_table", "with_truth",
    "ModelFormatError", "load_model", "model_bytes", "model_from_bytes", "save_model",
]
