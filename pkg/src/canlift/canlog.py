"""CAN log and GPS track parsing.

Logs use a line-oriented text form, one frame per line::

    1481492683.285052 0208 000 8 00 00 32 00 0e 32 fe 3c

timestamp, 11-bit id (hex), request field (3 chars, nonzero means RTR),
dlc (hex) and ``dlc`` payload bytes. An optional ``0x`` prefix on the hex
fields is accepted on input; output is always the canonical lowercase form.

Frames are stored column-wise (numpy arrays) so that multi-million frame
drives stay cheap to slice per id.
"""

from __future__ import annotations

import math
from collections import Counter
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

MAX_STANDARD_ID = 0x7FF
MAX_DLC = 8


class LogParseError(ValueError):
    """A malformed line in a CAN log or GPS file."""

    def __init__(self, lineno: int, reason: str, line: str = ""):
        self.lineno = lineno
        self.reason = reason
        self.line = line
        super().__init__(f"line {lineno}: {reason}")


@dataclass(frozen=True, slots=True)
class CanFrame:
    timestamp: float
    can_id: int
    rtr: bool
    dlc: int
    payload: bytes

    def __post_init__(self):
        if not 0 <= self.can_id <= MAX_STANDARD_ID:
            raise ValueError(f"can_id {self.can_id:#x} is not an 11-bit standard id")
        if not 0 <= self.dlc <= MAX_DLC:
            raise ValueError(f"dlc {self.dlc} out of range 0..8")
        if len(self.payload) != self.dlc:
            raise ValueError(f"payload has {len(self.payload)} bytes, dlc says {self.dlc}")
        if not (math.isfinite(self.timestamp) and self.timestamp > 0):
            raise ValueError(f"timestamp {self.timestamp!r} must be finite and positive")

    def to_line(self) -> str:
        return format_frame(self.timestamp, self.can_id, self.rtr, self.dlc, self.payload)


def format_frame(timestamp: float, can_id: int, rtr: bool, dlc: int, payload: bytes) -> str:
    data = payload.hex(" ")
    head = f"{timestamp:.6f} {can_id:04x} {'001' if rtr else '000'} {dlc:x}"
    return f"{head} {data}" if dlc else head


class IdSummary(NamedTuple):
    can_id: int
    frame_count: int
    dominant_dlc: int


class CanLog:
    """Time-ordered CAN frames with a per-id index.

    Column arrays are read-only; ``frames`` materialises :class:`CanFrame`
    objects on demand.
    """

    def __init__(
        self,
        timestamps: np.ndarray,
        can_ids: np.ndarray,
        rtr: np.ndarray,
        dlc: np.ndarray,
        payload: np.ndarray,
        meta: dict | None = None,
        skipped: int = 0,
    ):
        order = np.argsort(timestamps, kind="stable")
        self.timestamps = _frozen(np.asarray(timestamps, dtype=np.float64)[order])
        self.can_ids = _frozen(np.asarray(can_ids, dtype=np.uint16)[order])
        self.rtr = _frozen(np.asarray(rtr, dtype=bool)[order])
        self.dlc = _frozen(np.asarray(dlc, dtype=np.uint8)[order])
        payload = np.asarray(payload, dtype=np.uint8).reshape(-1, MAX_DLC)
        self.payload = _frozen(payload[order])
        self.meta = dict(meta or {})
        self.skipped = skipped
        self.index = _build_index(self.can_ids)

    @classmethod
    def from_frames(cls, frames: Iterable[CanFrame], meta: dict | None = None) -> CanLog:
        frames = list(frames)
        payload = np.zeros((len(frames), MAX_DLC), dtype=np.uint8)
        for row, fr in enumerate(frames):
            payload[row, : fr.dlc] = np.frombuffer(fr.payload, dtype=np.uint8)
        return cls(
            np.array([f.timestamp for f in frames], dtype=np.float64),
            np.array([f.can_id for f in frames], dtype=np.uint16),
            np.array([f.rtr for f in frames], dtype=bool),
            np.array([f.dlc for f in frames], dtype=np.uint8),
            payload,
            meta=meta,
        )

    def __len__(self) -> int:
        return len(self.timestamps)

    def __getitem__(self, i: int) -> CanFrame:
        dlc = int(self.dlc[i])
        return CanFrame(
            float(self.timestamps[i]),
            int(self.can_ids[i]),
            bool(self.rtr[i]),
            dlc,
            self.payload[i, :dlc].tobytes(),
        )

    def __iter__(self) -> Iterator[CanFrame]:
        return (self[i] for i in range(len(self)))

    @property
    def frames(self) -> Sequence[CanFrame]:
        return _FrameView(self)

    def frames_for(self, can_id: int) -> list[CanFrame]:
        return [self[i] for i in self.index.get(can_id, ())]

    def to_text(self) -> str:
        return "".join(line + "\n" for line in self.iter_lines())

    def iter_lines(self) -> Iterator[str]:
        for i in range(len(self)):
            dlc = int(self.dlc[i])
            head = (
                f"{self.timestamps[i]:.6f} {int(self.can_ids[i]):04x} "
                f"{'001' if self.rtr[i] else '000'} {dlc:x}"
            )
            if dlc:
                yield head + " " + self.payload[i, :dlc].tobytes().hex(" ")
            else:
                yield head

    def write(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.iter_lines():
                fh.write(line)
                fh.write("\n")


class _FrameView(Sequence):
    def __init__(self, log: CanLog):
        self._log = log

    def __len__(self):
        return len(self._log)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self._log[j] for j in range(*i.indices(len(self._log)))]
        if i < 0:
            i += len(self._log)
        if not 0 <= i < len(self._log):
            raise IndexError(i)
        return self._log[i]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _build_index(can_ids: np.ndarray) -> dict[int, np.ndarray]:
    if len(can_ids) == 0:
        return {}
    order = np.argsort(can_ids, kind="stable")
    sorted_ids = can_ids[order]
    bounds = np.flatnonzero(np.diff(sorted_ids)) + 1
    index = {}
    for rows in np.split(order, bounds):
        rows = _frozen(rows)
        index[int(can_ids[rows[0]])] = rows
    return index


def _parse_hex(token: str) -> int:
    if token[:2] in ("0x", "0X"):
        token = token[2:]
    return int(token, 16)


def parse_log(
    source: str | bytes | Iterable[str],
    strict: bool = False,
    meta: dict | None = None,
) -> CanLog:
    """Parse canonical CAN log text.

    In lenient mode (default) malformed lines are skipped and counted in
    ``CanLog.skipped``; ``strict=True`` raises :class:`LogParseError` on the
    first bad line instead.
    """
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    lines = source.splitlines() if isinstance(source, str) else source

    ts_col: list[float] = []
    id_col: list[int] = []
    rtr_col: list[bool] = []
    dlc_col: list[int] = []
    chunks: list[bytes] = []
    skipped = 0
    pad = bytes(MAX_DLC)

    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            ts, can_id, rtr, dlc, data = _parse_line(line)
        except LogParseError as exc:
            if strict:
                raise LogParseError(lineno, exc.reason, line) from None
            skipped += 1
            continue
        ts_col.append(ts)
        id_col.append(can_id)
        rtr_col.append(rtr)
        dlc_col.append(dlc)
        chunks.append(data + pad[dlc:])

    payload = np.frombuffer(b"".join(chunks), dtype=np.uint8).reshape(-1, MAX_DLC)
    return CanLog(
        np.array(ts_col, dtype=np.float64),
        np.array(id_col, dtype=np.uint16),
        np.array(rtr_col, dtype=bool),
        np.array(dlc_col, dtype=np.uint8),
        payload,
        meta=meta,
        skipped=skipped,
    )


def _parse_line(line: str) -> tuple[float, int, bool, int, bytes]:
    parts = line.split(None, 4)
    if len(parts) < 4:
        raise LogParseError(0, "expected at least 4 fields")
    try:
        ts = float(parts[0])
    except ValueError:
        raise LogParseError(0, f"bad timestamp {parts[0]!r}") from None
    if not (math.isfinite(ts) and ts > 0):
        raise LogParseError(0, f"timestamp {parts[0]!r} must be finite and positive")
    try:
        can_id = _parse_hex(parts[1])
        rtr = _parse_hex(parts[2]) != 0
        dlc = _parse_hex(parts[3])
    except ValueError:
        raise LogParseError(0, "bad hex in id/request/dlc field") from None
    if can_id > MAX_STANDARD_ID:
        raise LogParseError(0, f"id {parts[1]} exceeds 0x7ff (extended 29-bit ids are not supported)")
    if dlc > MAX_DLC:
        raise LogParseError(0, f"dlc {dlc} exceeds 8")
    rest = parts[4] if len(parts) == 5 else ""
    try:
        data = bytes.fromhex(rest)
    except ValueError:
        if "0x" not in rest and "0X" not in rest:
            raise LogParseError(0, "bad payload hex") from None
        try:
            data = bytes(_parse_byte(t) for t in rest.split())
        except ValueError:
            raise LogParseError(0, "bad payload hex") from None
    if len(data) != dlc:
        raise LogParseError(0, f"dlc {dlc} but {len(data)} payload bytes")
    return ts, can_id, rtr, dlc, data


def _parse_byte(token: str) -> int:
    if len(token) not in (2, 4):
        raise ValueError(token)
    value = _parse_hex(token)
    if value > 0xFF:
        raise ValueError(token)
    return value


def read_log(path: str | Path, strict: bool = False) -> CanLog:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        return parse_log(fh.read(), strict=strict, meta={"source": str(path)})


def ids(log: CanLog) -> list[IdSummary]:
    """Per-id frame count and most common dlc (ties go to the larger dlc)."""
    out = []
    for can_id in sorted(log.index):
        rows = log.index[can_id]
        counts = Counter(log.dlc[rows].tolist())
        dominant = max(counts, key=lambda d: (counts[d], d))
        out.append(IdSummary(can_id, len(rows), dominant))
    return out


@dataclass(frozen=True)
class GpsTrack:
    timestamps: np.ndarray
    latitudes: np.ndarray
    longitudes: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("timestamps", "latitudes", "longitudes"):
            object.__setattr__(self, name, _frozen(np.asarray(getattr(self, name), dtype=np.float64)))
        if not len(self.timestamps) == len(self.latitudes) == len(self.longitudes):
            raise ValueError("timestamp/latitude/longitude columns differ in length")
        if np.any(np.diff(self.timestamps) <= 0):
            raise ValueError("GPS timestamps must be strictly increasing")
        if np.any(np.abs(self.latitudes) > 90) or np.any(np.abs(self.longitudes) > 180):
            raise ValueError("coordinate out of range")

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.timestamps.tolist(), self.latitudes.tolist(), self.longitudes.tolist()))

    def to_csv(self) -> str:
        return "".join(
            f"{t:.3f},{lat:.7f},{lon:.7f}\n" for t, lat, lon in self.points
        )


def parse_gps(source: str | bytes | Iterable[str]) -> GpsTrack:
    """Parse header-less ``timestamp,lat,lon`` CSV. Any bad line is an error."""
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    lines = source.splitlines() if isinstance(source, str) else source
    rows: list[tuple[float, float, float]] = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != 3:
            raise LogParseError(lineno, "expected timestamp,lat,lon", line)
        try:
            t, lat, lon = (float(f) for f in fields)
        except ValueError:
            raise LogParseError(lineno, "non-numeric field", line) from None
        if not all(math.isfinite(v) for v in (t, lat, lon)):
            raise LogParseError(lineno, "non-finite field", line)
        if not (-90 <= lat <= 90 and -180 <= lon <= 180):
            raise LogParseError(lineno, "coordinate out of range", line)
        if rows and t <= rows[-1][0]:
            raise LogParseError(lineno, "timestamps must be strictly increasing", line)
        rows.append((t, lat, lon))
    cols = np.array(rows, dtype=np.float64).reshape(-1, 3)
    return GpsTrack(cols[:, 0], cols[:, 1], cols[:, 2])


def read_gps(path: str | Path) -> GpsTrack:
    with open(path, encoding="utf-8") as fh:
        return parse_gps(fh.read())
