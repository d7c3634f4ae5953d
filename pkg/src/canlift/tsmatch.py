"""GPS-derived velocity and DTW matching against CAN candidates."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .canlog import GpsTrack
from .decomposer import CandidateSeries

EARTH_RADIUS_KM = 6371.0
DEFAULT_MAX_JUMP_KMH = 30.0


@dataclass(frozen=True, eq=False)
class VelocitySeries:
    timestamps: np.ndarray
    speeds: np.ndarray  # km/h
    provenance: str = "gps"

    def __post_init__(self):
        if len(self.timestamps) != len(self.speeds):
            raise ValueError("timestamps and speeds differ in length")
        if np.any(np.diff(self.timestamps) <= 0):
            raise ValueError("velocity timestamps must be strictly increasing")
        if np.any(self.speeds < 0):
            raise ValueError("negative speed")

    def __len__(self) -> int:
        return len(self.speeds)


@dataclass(frozen=True)
class DtwResult:
    distance: float
    path_length: int
    query: object = None
    candidate: object = None


def haversine_m(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Great-circle distance in metres (vectorised)."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi = p2 - p1
    dlmb = np.radians(np.asarray(lon2) - np.asarray(lon1))
    h = np.sin(dphi / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_KM * 1000.0 * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def gps_to_velocity(track: GpsTrack) -> VelocitySeries:
    """Mean speed between consecutive fixes, stamped at the later fix."""
    if len(track) < 2:
        raise ValueError("need at least two GPS points")
    dt = np.diff(track.timestamps)
    if np.any(dt <= 0):
        raise ValueError("duplicate GPS timestamps")
    dist = haversine_m(track.latitudes[:-1], track.longitudes[:-1], track.latitudes[1:], track.longitudes[1:])
    return VelocitySeries(track.timestamps[1:].copy(), dist / dt * 3.6, "gps")


def remove_velocity_outliers(v: VelocitySeries, max_jump: float = DEFAULT_MAX_JUMP_KMH) -> VelocitySeries:
    """Drop samples that jump more than ``max_jump`` from the last kept sample."""
    if max_jump <= 0:
        raise ValueError("max_jump must be positive")
    if len(v) == 0:
        return v
    keep = [0]
    last = v.speeds[0]
    for i, s in enumerate(v.speeds[1:].tolist(), start=1):
        if abs(s - last) <= max_jump:
            keep.append(i)
            last = s
    keep = np.asarray(keep)
    return VelocitySeries(v.timestamps[keep], v.speeds[keep], v.provenance)


def dtw_matrix(a: Sequence[float], b: Sequence[float], band: int | None = None) -> np.ndarray:
    """Accumulated-cost table with a padding row/column of +inf (``D[0, 0] = 0``).

    ``D[i, j] = |a[i-1] - b[j-1]| + min(D[i-1, j], D[i, j-1], D[i-1, j-1])``,
    filled one anti-diagonal at a time. ``band`` limits |i - j*n/m| (Sakoe-Chiba).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        raise ValueError("dtw needs non-empty series")
    cost = np.abs(a[:, None] - b[None, :])
    if band is not None:
        if band < 0:
            raise ValueError("band must be >= 0")
        ii, jj = np.indices((n, m))
        cost[np.abs(ii - jj * (n / m)) > band + 1e-9] = np.inf
    D = np.full((n + 1, m + 1), np.inf)
    D[0, 0] = 0.0
    for d in range(2, n + m + 1):
        i = np.arange(max(1, d - m), min(n, d - 1) + 1)
        j = d - i
        prev = np.minimum(np.minimum(D[i - 1, j], D[i, j - 1]), D[i - 1, j - 1])
        D[i, j] = cost[i - 1, j - 1] + prev
    return D


def dtw(a: Sequence[float], b: Sequence[float], band: int | None = None, query=None, candidate=None) -> DtwResult:
    D = dtw_matrix(a, b, band)
    n, m = D.shape[0] - 1, D.shape[1] - 1
    if not np.isfinite(D[n, m]):
        raise ValueError(f"band {band} too narrow for lengths {n} and {m}")
    return DtwResult(float(D[n, m]), _path_length(D), query, candidate)


def _path_length(D: np.ndarray) -> int:
    """Cells on the optimal path, backtracking with diagonal > up > left on ties."""
    i, j = D.shape[0] - 1, D.shape[1] - 1
    steps = 1
    while (i, j) != (1, 1):
        moves = ((i - 1, j - 1), (i - 1, j), (i, j - 1))
        i, j = min(moves, key=lambda ij: D[ij])
        steps += 1
    return steps


def per_second_mean(timestamps: np.ndarray, values: np.ndarray, t0: float, t1: float) -> np.ndarray:
    """Mean value in each 1 s bin [t0 + k, t0 + k + 1); empty bins hold the previous value."""
    nbins = int(np.floor(t1 - t0)) + 1
    if nbins <= 0:
        return np.empty(0)
    sel = (timestamps >= t0) & (timestamps < t0 + nbins)
    idx = np.floor(timestamps[sel] - t0).astype(np.int64)
    sums = np.bincount(idx, weights=values[sel], minlength=nbins)
    counts = np.bincount(idx, minlength=nbins)
    out = np.full(nbins, np.nan)
    out[counts > 0] = sums[counts > 0] / counts[counts > 0]
    # forward fill, then back fill a leading gap
    valid = ~np.isnan(out)
    if not valid.any():
        return np.zeros(nbins)
    pos = np.where(valid, np.arange(nbins), 0)
    np.maximum.accumulate(pos, out=pos)
    out = out[pos]
    first = int(np.argmax(valid))
    out[:first] = out[first]
    return out


def minmax(x: np.ndarray) -> np.ndarray:
    lo, hi = float(np.min(x)), float(np.max(x))
    if hi == lo:
        return np.zeros_like(x, dtype=np.float64)
    return (x - lo) / (hi - lo)


def reference_profile(reference: VelocitySeries) -> tuple[np.ndarray, float, float]:
    """1 Hz min-max normalised reference and the time span it covers."""
    t0 = float(np.floor(reference.timestamps[0]))
    t1 = float(reference.timestamps[-1])
    return minmax(per_second_mean(reference.timestamps, reference.speeds, t0, t1)), t0, t1


def rank_by_dtw(
    reference: VelocitySeries,
    candidates: Sequence[CandidateSeries],
    band: int | None = None,
) -> list[tuple[CandidateSeries, float]]:
    """Candidates ordered by DTW distance to the reference, best first.

    Both sides are brought to a 1 Hz grid over the reference's time span and
    min-max normalised before matching.
    """
    ref, t0, t1 = reference_profile(reference)
    scored = []
    for cand in candidates:
        values = cand.normalized if cand.normalized is not None else cand.raw.astype(np.float64)
        prof = per_second_mean(cand.timestamps, values, t0, t1)
        if len(prof) == 0 or not np.any((cand.timestamps >= t0) & (cand.timestamps <= t1)):
            continue
        scored.append((cand, dtw(ref, minmax(prof), band).distance))
    scored.sort(key=lambda cd: (cd[1], cd[0].key))
    return scored
