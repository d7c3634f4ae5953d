"""Window tables, per-signal models, vote-based localisation and its metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from ..canlog import CanLog
from ..config import PipelineConfig
from ..decomposer import CandidateKey, CandidateSeries, decompose, equivalents, windows
from ..features import extract_many
from .forest import Forest, train_forest


class ConfigMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class WindowTable:
    """Feature rows for every emitted window of every candidate in one log."""

    keys: tuple[CandidateKey, ...]
    owner: np.ndarray  # row -> index into keys
    t_start: np.ndarray
    X: np.ndarray
    feature_names: tuple[str, ...]

    def rows_for(self, key: CandidateKey) -> np.ndarray:
        if key not in self.keys:
            return np.empty(0, dtype=np.int64)
        return np.flatnonzero(self.owner == self.keys.index(key))

    def __len__(self) -> int:
        return len(self.owner)


def candidates_for(log: CanLog, config: PipelineConfig) -> list[CandidateSeries]:
    return decompose(log, config.min_variation, config.little_endian, config.drop_redundant_pairs)


def window_table(series: Iterable[CandidateSeries], config: PipelineConfig) -> WindowTable:
    series = sorted(series, key=lambda s: s.key)
    wins, owner = [], []
    for k, s in enumerate(series):
        ws = windows(s, config.window_s, config.overlap, config.min_variation)
        wins += ws
        owner += [k] * len(ws)
    spec = config.feature_spec
    X = extract_many(wins, spec) if wins else np.empty((0, len(spec)))
    return WindowTable(
        tuple(s.key for s in series),
        np.asarray(owner, dtype=np.int64),
        np.asarray([w.t_start for w in wins]),
        X,
        spec.names,
    )


@dataclass(frozen=True, eq=False)
class SignalModel:
    """A forest bound to one signal and the pipeline config it was trained under."""

    signal: str
    forest: Forest
    config: PipelineConfig
    base_truth: str = ""

    @property
    def config_hash(self) -> str:
        return self.config.hash


def train_signal_model(
    base: CanLog | WindowTable,
    signal: str,
    truth: CandidateKey,
    config: PipelineConfig = PipelineConfig(),
    threads: int = 1,
) -> SignalModel:
    """Positives: the truth's windows. Negatives: every other candidate's
    windows, except candidates carrying the truth as their high part."""
    table = base if isinstance(base, WindowTable) else window_table(candidates_for(base, config), config)
    pos_rows = table.rows_for(truth)
    if len(pos_rows) == 0:
        raise ValueError(f"truth {truth} has no windows in the base log")
    same = equivalents(truth)
    neg_mask = np.ones(len(table), dtype=bool)
    for key in same:
        neg_mask[table.rows_for(key)] = False
    forest = train_forest(
        table.X[pos_rows], table.X[neg_mask], config.forest, config.seed,
        table.feature_names, signal, threads,
    )
    return SignalModel(signal, forest, config, str(truth))


@dataclass(frozen=True)
class CandidateVotes:
    key: CandidateKey
    votes: int
    windows: int

    @property
    def fraction(self) -> float:
        return self.votes / self.windows if self.windows else 0.0


@dataclass(frozen=True)
class Evaluation:
    rank: int
    precision: float
    recall: float
    gap: float


@dataclass(frozen=True)
class MatchReport:
    signal: str
    candidates: tuple[CandidateVotes, ...]
    config_hash: str
    truth: CandidateKey | None = None
    evaluation: Evaluation | None = None
    true_keys: frozenset = field(default_factory=frozenset)

    @property
    def total_votes(self) -> int:
        return sum(c.votes for c in self.candidates)

    @property
    def best(self) -> CandidateVotes:
        return self.candidates[0]


def rank_candidates(table: WindowTable, positive: np.ndarray) -> tuple[CandidateVotes, ...]:
    votes = np.bincount(table.owner, weights=positive.astype(np.float64), minlength=len(table.keys))
    counts = np.bincount(table.owner, minlength=len(table.keys))
    rows = [CandidateVotes(k, int(v), int(c)) for k, v, c in zip(table.keys, votes, counts) if c > 0]
    rows.sort(key=lambda r: (-r.votes, r.key))
    return tuple(rows)


def locate_signal(
    model: SignalModel,
    target: CanLog | WindowTable,
    config: PipelineConfig | None = None,
    truth: CandidateKey | None = None,
) -> MatchReport:
    """Classify every window of every target candidate and rank candidates by votes."""
    config = config or model.config
    if config.hash != model.config_hash:
        raise ConfigMismatch(f"model was trained under config {model.config_hash}, target processed under {config.hash}")
    table = target if isinstance(target, WindowTable) else window_table(candidates_for(target, config), config)
    if len(table) == 0:
        raise ValueError("no candidate windows survive pruning in the target log")
    if table.feature_names != model.forest.feature_names:
        raise ConfigMismatch("feature spec of the target windows differs from the model")
    positive = model.forest.predict(table.X)
    ranking = rank_candidates(table, positive)
    report = MatchReport(model.signal, ranking, config.hash)
    if truth is not None:
        report = with_truth(report, truth)
    return report


def with_truth(report: MatchReport, truth: CandidateKey, extra_true: Iterable[CandidateKey] = ()) -> MatchReport:
    true_keys = frozenset(equivalents(truth)) | frozenset(extra_true)
    ev = evaluate(report, truth, true_keys)
    return MatchReport(report.signal, report.candidates, report.config_hash, truth, ev, true_keys)


def evaluate(report: MatchReport, truth: CandidateKey, true_keys: Iterable[CandidateKey] = ()) -> Evaluation:
    """Rank, window-level precision and recall, and the vote gap.

    ``true_keys`` lists further candidates that carry the same signal (for
    example a byte pair holding the true byte as its high part); they count
    as correct in the rank, precision and gap. Recall is measured on the
    windows of ``truth`` itself.
    """
    true_keys = set(true_keys) | {truth}
    by_key = {c.key: c for c in report.candidates}
    if truth not in by_key:
        raise ValueError(f"truth {truth} is not among the ranked candidates")
    rank = next(i for i, c in enumerate(report.candidates, start=1) if c.key in true_keys)
    tp = sum(c.votes for c in report.candidates if c.key in true_keys)
    fp = sum(c.votes for c in report.candidates if c.key not in true_keys)
    precision = tp / (tp + fp) if tp + fp else 0.0
    t = by_key[truth]
    recall = t.votes / t.windows if t.windows else 0.0
    return Evaluation(rank, precision, recall, vote_gap(report.candidates, true_keys))


def vote_gap(candidates: Iterable[CandidateVotes], true_keys: set) -> float:
    """(best true votes - best false votes) / all positive votes, floored at 0."""
    candidates = list(candidates)
    total = sum(c.votes for c in candidates)
    if total == 0:
        return 0.0
    best_true = max((c.votes for c in candidates if c.key in true_keys), default=0)
    best_false = max((c.votes for c in candidates if c.key not in true_keys), default=0)
    return max(0, best_true - best_false) / total
