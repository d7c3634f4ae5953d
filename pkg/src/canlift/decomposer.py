"""Cut CAN payload streams into candidate signal series.

Every id's dominant-dlc frames are split into single bytes and adjacent byte
pairs, low-variation series are pruned, the rest max-normalised to [0, 1] and
cut into overlapping time windows.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .canlog import CanLog

DEFAULT_WINDOW_S = 2.5
DEFAULT_OVERLAP = 0.25
DEFAULT_MIN_VARIATION = 7


class CandidateKey(NamedTuple):
    """Location of a candidate inside a log: id, first byte, width, byte order.

    ``str(key)`` gives ``"0410:1-2"`` (bytes 1 and 2, big-endian),
    ``"0510:3"`` for a single byte and ``"0410:1-2le"`` for little-endian.
    Byte positions are 0-based.
    """

    can_id: int
    start: int
    width: int = 1
    little_endian: bool = False

    def __str__(self) -> str:
        span = f"{self.start}" if self.width == 1 else f"{self.start}-{self.start + 1}"
        return f"{self.can_id:04x}:{span}{'le' if self.little_endian else ''}"

    @property
    def bytes(self) -> tuple[int, ...]:
        return tuple(range(self.start, self.start + self.width))

    @classmethod
    def parse(cls, text: str) -> CandidateKey:
        m = _KEY_RE.fullmatch(text.strip())
        if not m:
            raise ValueError(f"bad candidate key {text!r}; expected e.g. 0410:1-2")
        can_id = int(m["id"], 16)
        if can_id > 0x7FF:
            raise ValueError(f"{text!r}: id exceeds 0x7ff")
        start = int(m["a"])
        if m["b"] is None:
            if m["le"]:
                raise ValueError(f"{text!r}: byte order only applies to byte pairs")
            return cls(can_id, start, 1)
        if int(m["b"]) != start + 1:
            raise ValueError(f"{text!r}: pair bytes must be adjacent")
        return cls(can_id, start, 2, bool(m["le"]))


_KEY_RE = re.compile(r"(?:0[xX])?(?P<id>[0-9a-fA-F]{1,4}):(?P<a>[0-7])(?:-(?P<b>[0-7])(?P<le>le)?)?")


@dataclass(frozen=True)
class BitDistribution:
    can_id: int
    probs: np.ndarray
    frame_count: int
    dropped_frames: int = 0

    def to_csv(self) -> str:
        rows = ["bit,probability"]
        rows += [f"{i},{p:.4f}" for i, p in enumerate(self.probs)]
        return "\n".join(rows) + "\n"


@dataclass(frozen=True, eq=False)
class CandidateSeries:
    key: CandidateKey
    timestamps: np.ndarray
    raw: np.ndarray
    norm_max: int = 0
    normalized: np.ndarray | None = None
    distinct_count: int = field(default=-1)

    def __post_init__(self):
        if self.distinct_count < 0:
            object.__setattr__(self, "distinct_count", int(len(np.unique(self.raw))))

    def __len__(self) -> int:
        return len(self.raw)

    @property
    def duration(self) -> float:
        return float(self.timestamps[-1] - self.timestamps[0]) if len(self.timestamps) else 0.0


@dataclass(frozen=True, eq=False)
class WindowSample:
    source: CandidateKey
    t_start: float
    t_end: float
    values: np.ndarray
    distinct_count: int


def dominant_frames(log: CanLog, can_id: int) -> tuple[np.ndarray, np.ndarray, int, int]:
    """Timestamps and payload rows of the id's non-RTR frames with the most common dlc.

    Returns ``(timestamps, payload[:, :dlc], dlc, dropped)``.
    """
    if can_id not in log.index:
        raise KeyError(f"id {can_id:04x} not present in log")
    rows = log.index[can_id]
    rows = rows[~log.rtr[rows]]
    if len(rows) == 0:
        return np.empty(0), np.empty((0, 0), dtype=np.uint8), 0, 0
    counts = Counter(log.dlc[rows].tolist())
    dlc = max(counts, key=lambda d: (counts[d], d))
    keep = rows[log.dlc[rows] == dlc]
    return log.timestamps[keep], log.payload[keep, :dlc], dlc, len(rows) - len(keep)


def bit_distribution(log: CanLog, can_id: int) -> BitDistribution:
    """Fraction of frames with each payload bit set; bit 0 is the MSB of byte 0."""
    ts, payload, dlc, dropped = dominant_frames(log, can_id)
    if len(ts) == 0:
        raise ValueError(f"id {can_id:04x} has no data frames")
    bits = np.unpackbits(payload, axis=1)
    probs = bits.sum(axis=0, dtype=np.int64) / len(ts)
    return BitDistribution(can_id, probs, len(ts), dropped)


def _decode(payload: np.ndarray, key: CandidateKey) -> np.ndarray:
    if key.width == 1:
        return payload[:, key.start].astype(np.int64)
    hi, lo = payload[:, key.start].astype(np.int64), payload[:, key.start + 1].astype(np.int64)
    if key.little_endian:
        hi, lo = lo, hi
    return hi * 256 + lo


def candidate_keys(dlc: int, can_id: int, little_endian: bool = False) -> list[CandidateKey]:
    keys = [CandidateKey(can_id, i, 1) for i in range(dlc)]
    keys += [CandidateKey(can_id, i, 2) for i in range(dlc - 1)]
    if little_endian:
        keys += [CandidateKey(can_id, i, 2, True) for i in range(dlc - 1)]
    return keys


def candidate_series(log: CanLog, little_endian: bool = False) -> list[CandidateSeries]:
    """All single-byte and adjacent byte-pair series for every id, unpruned."""
    out = []
    for can_id in sorted(log.index):
        ts, payload, dlc, _ = dominant_frames(log, can_id)
        if len(ts) == 0:
            continue
        ts, payload = _dedupe_times(ts, payload)
        for key in candidate_keys(dlc, can_id, little_endian):
            out.append(CandidateSeries(key, ts, _decode(payload, key)))
    return out


def extract_series(log: CanLog, key: CandidateKey) -> CandidateSeries:
    ts, payload, dlc, _ = dominant_frames(log, key.can_id)
    if key.start + key.width > dlc:
        raise ValueError(f"{key} lies outside the id's {dlc}-byte payload")
    ts, payload = _dedupe_times(ts, payload)
    return CandidateSeries(key, ts, _decode(payload, key))


def _dedupe_times(ts: np.ndarray, payload: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Same-id frames sharing a timestamp: keep the first so time stays strictly increasing.
    if len(ts) > 1 and np.any(np.diff(ts) <= 0):
        keep = np.concatenate(([True], np.diff(ts) > 0))
        return ts[keep], payload[keep]
    return ts, payload


def prune(
    series: list[CandidateSeries],
    min_variation: int = DEFAULT_MIN_VARIATION,
    drop_redundant_pairs: bool = True,
) -> list[CandidateSeries]:
    """Drop series with fewer than ``min_variation`` distinct raw values, and all constants.

    With ``drop_redundant_pairs`` a byte pair is also dropped when one of its
    bytes never changes: it is then an affine copy of the other byte's series.
    """
    if min_variation < 1:
        raise ValueError("min_variation must be >= 1")
    return [s for s in series if drop_reason(s, min_variation, drop_redundant_pairs) is None]


def drop_reason(
    s: CandidateSeries,
    min_variation: int = DEFAULT_MIN_VARIATION,
    drop_redundant_pairs: bool = True,
) -> str | None:
    """Why ``prune`` would drop ``s`` (``None`` if it is kept)."""
    if s.distinct_count < 2:
        return "constant"
    if s.distinct_count < min_variation:
        return "low-variation"
    if drop_redundant_pairs and s.key.width == 2 and (_is_constant(s.raw >> 8) or _is_constant(s.raw & 0xFF)):
        return "constant-byte"
    return None


def _is_constant(x: np.ndarray) -> bool:
    return len(x) == 0 or bool(np.all(x == x[0]))


def normalize(series: CandidateSeries) -> CandidateSeries:
    peak = int(series.raw.max()) if len(series.raw) else 0
    if peak <= 0:
        raise ValueError(f"{series.key}: all-zero series cannot be normalised")
    return CandidateSeries(
        series.key,
        series.timestamps,
        series.raw,
        norm_max=peak,
        normalized=series.raw / peak,
        distinct_count=series.distinct_count,
    )


def decompose(
    log: CanLog,
    min_variation: int = DEFAULT_MIN_VARIATION,
    little_endian: bool = False,
    drop_redundant_pairs: bool = True,
) -> list[CandidateSeries]:
    """candidate_series -> prune -> normalize."""
    kept = prune(candidate_series(log, little_endian), min_variation, drop_redundant_pairs)
    return [normalize(s) for s in kept]


def window_bounds(t_first: float, t_last: float, length_s: float, overlap: float) -> np.ndarray:
    """Start times of all full windows fitting in [t_first, t_last]."""
    if length_s <= 0:
        raise ValueError("window length must be positive")
    if not 0 <= overlap < 1:
        raise ValueError("overlap must be in [0, 1)")
    stride = length_s * (1.0 - overlap)
    span = t_last - t_first
    if span < length_s:
        return np.empty(0)
    count = int(np.floor((span - length_s) / stride + 1e-9)) + 1
    return t_first + np.arange(count) * stride


def window_slices(
    timestamps: np.ndarray, starts: np.ndarray, length_s: float
) -> tuple[np.ndarray, np.ndarray]:
    lo = np.searchsorted(timestamps, starts, side="left")
    hi = np.searchsorted(timestamps, starts + length_s, side="left")
    return lo, hi


def windows(
    series: CandidateSeries,
    length_s: float = DEFAULT_WINDOW_S,
    overlap: float = DEFAULT_OVERLAP,
    min_variation: int = DEFAULT_MIN_VARIATION,
) -> list[WindowSample]:
    """Overlapping windows over a normalised series.

    A window is kept when it holds at least two samples and at least
    ``min_variation`` distinct raw values.
    """
    if series.normalized is None:
        raise ValueError(f"{series.key}: normalise before windowing")
    if len(series) == 0:
        return []
    starts = window_bounds(float(series.timestamps[0]), float(series.timestamps[-1]), length_s, overlap)
    lo, hi = window_slices(series.timestamps, starts, length_s)
    out = []
    for t0, a, b in zip(starts.tolist(), lo.tolist(), hi.tolist()):
        if b - a < 2:
            continue
        distinct = _distinct(series.raw[a:b])
        if distinct < min_variation:
            continue
        out.append(WindowSample(series.key, t0, t0 + length_s, series.normalized[a:b], distinct))
    return out


def _distinct(raw: np.ndarray) -> int:
    s = np.sort(raw)
    return int(np.count_nonzero(np.diff(s))) + 1


def equivalents(key: CandidateKey, dlc: int = 8) -> set[CandidateKey]:
    """Candidates that carry ``key`` as their most significant part.

    For a single byte these are the byte itself and the two pairs (one per
    byte order) in which it is the high byte; the low byte only adds
    sub-unit resolution, so locating either pair locates the signal.
    """
    out = {key}
    if key.width == 1:
        if key.start + 1 < dlc:
            out.add(CandidateKey(key.can_id, key.start, 2))
        if key.start >= 1:
            out.add(CandidateKey(key.can_id, key.start - 1, 2, True))
    return out
