"""Heuristic searches that label signals in an unknown car.

Two patterns are used:

* the brake and accelerator pedals are (almost) never pressed together;
* during a standing start, every gear change shows a sharp RPM drop while the
  clutch pauses in a slipping position on its way up.

All thresholds are plain keyword arguments so they can be tuned per car.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .decomposer import CandidateKey, CandidateSeries

GRID_S = 0.1
MIN_DISTINCT = 10


@dataclass(frozen=True)
class ExclusivityScore:
    pair: tuple[CandidateKey, CandidateKey]
    co_active_fraction: float
    active_fraction_a: float
    active_fraction_b: float

    def __post_init__(self):
        fr = (self.co_active_fraction, self.active_fraction_a, self.active_fraction_b)
        if not all(0.0 <= f <= 1.0 for f in fr):
            raise ValueError("fractions must lie in [0, 1]")
        if self.co_active_fraction > min(self.active_fraction_a, self.active_fraction_b) + 1e-12:
            raise ValueError("co-activity cannot exceed either activity")


@dataclass(frozen=True)
class SpikePlatformScore:
    pair: tuple[CandidateKey, CandidateKey]  # (rpm candidate, clutch candidate)
    episode_count: int
    matched_episodes: int
    spike_count: int = 0
    platform_count: int = 0

    def __post_init__(self):
        if not 0 <= self.matched_episodes <= self.episode_count:
            raise ValueError("matched_episodes must lie in [0, episode_count]")


def _values(s: CandidateSeries) -> np.ndarray:
    if s.normalized is None:
        raise ValueError(f"{s.key} is not normalized")
    return s.normalized


def align(series: Sequence[CandidateSeries], step: float = GRID_S) -> tuple[np.ndarray, np.ndarray]:
    """Sample every series on one grid over their common time span (last value held)."""
    t0 = max(float(s.timestamps[0]) for s in series)
    t1 = min(float(s.timestamps[-1]) for s in series)
    if t1 < t0:
        raise ValueError("candidates do not overlap in time")
    grid = t0 + step * np.arange(int(np.floor((t1 - t0) / step + 1e-9)) + 1)
    out = np.empty((len(series), len(grid)))
    for k, s in enumerate(series):
        idx = np.searchsorted(s.timestamps, grid, side="right") - 1
        out[k] = _values(s)[idx]
    return grid, out


def exclusivity_search(
    candidates: Sequence[CandidateSeries],
    activity_threshold: float = 0.05,
    min_active: float = 0.05,
    min_distinct: int = MIN_DISTINCT,
    step: float = GRID_S,
) -> list[ExclusivityScore]:
    """Candidate pairs ordered from most to least mutually exclusive.

    A candidate is active where its normalized value exceeds
    ``activity_threshold``. Piecewise-constant candidates (fewer than
    ``min_distinct`` values) and candidates active less than ``min_active`` of
    the time are skipped. Ties in co-activity go to the pair whose less active
    member is more active, then to key order.
    """
    if len(candidates) < 2:
        raise ValueError("exclusivity search needs at least two candidates")
    usable = sorted((c for c in candidates if c.distinct_count >= min_distinct), key=lambda c: c.key)
    if len(usable) < 2:
        return []
    _, X = align(usable, step)
    active = (X > activity_threshold).astype(np.float64)
    frac = active.mean(axis=1)
    keep = np.flatnonzero(frac >= min_active)
    active, frac = active[keep], frac[keep]
    keys = [usable[k].key for k in keep]
    co = (active @ active.T) / active.shape[1]

    scores = []
    for a in range(len(keys)):
        for b in range(a + 1, len(keys)):
            c = min(float(co[a, b]), float(frac[a]), float(frac[b]))
            scores.append(ExclusivityScore((keys[a], keys[b]), c, float(frac[a]), float(frac[b])))
    scores.sort(key=lambda s: (s.co_active_fraction, -min(s.active_fraction_a, s.active_fraction_b), s.pair))
    return scores


def find_accel_episodes(
    velocity: CandidateSeries,
    v_low: float = 0.02,
    v_high: float = 0.3,
    tolerance: float = 0.02,
) -> list[tuple[float, float]]:
    """Maximal standing-start intervals of a normalized velocity series.

    An episode starts at the earliest sample at or below ``v_low`` from which
    the series never falls more than ``tolerance`` below its running maximum,
    and ends at the first sample at or above ``v_high``.
    """
    if not v_low < v_high:
        raise ValueError("v_low must be below v_high")
    t = velocity.timestamps
    x = _values(velocity)
    episodes = []
    start = None
    peak = 0.0
    for i, v in enumerate(x.tolist()):
        if start is not None and v < peak - tolerance:
            start = None
        if start is None:
            if v <= v_low:
                start, peak = i, v
            continue
        peak = max(peak, v)
        if v >= v_high:
            episodes.append((float(t[start]), float(t[i])))
            start = None
    return episodes


@dataclass(frozen=True)
class Spike:
    t_peak: float
    t_trough: float


@dataclass(frozen=True)
class Platform:
    t_start: float
    t_end: float
    level: float


def find_spikes(
    grid: np.ndarray,
    x: np.ndarray,
    min_drop: float = 0.15,
    within_s: float = 2.0,
    min_trough: float = 0.1,
    min_rerise: float = 0.03,
    step: float = GRID_S,
) -> list[Spike]:
    """Local maxima followed, within ``within_s``, by a drop of ``min_drop`` and a re-rise of ``min_rerise``.

    The trough must stay at or above ``min_trough``: an engine keeps idling
    through a gear change, whereas a released pedal falls to zero.
    """
    w = int(round(within_s / step))
    if len(x) < w + 2:
        return []
    win = sliding_window_view(x, w + 1)  # row i covers x[i .. i+w]
    low = win.argmin(axis=1)
    trough = win[np.arange(len(win)), low]
    drop = win[:, 0] - trough
    # highest value at or after the trough inside the same window
    suffix_max = np.maximum.accumulate(win[:, ::-1], axis=1)[:, ::-1]
    rerise = suffix_max[np.arange(len(win)), low] - trough
    i = np.arange(len(win))
    prev = np.concatenate(([-np.inf], x[:-1]))[: len(win)]
    nxt = x[1 : len(win) + 1]
    hit = (win[:, 0] >= prev) & (win[:, 0] > nxt) & (drop >= min_drop) & (trough >= min_trough) & (rerise >= min_rerise)
    spikes = []
    last_trough = -1
    for k in i[hit]:
        tr = int(k + low[k])
        if tr == last_trough:
            continue  # same drop seen from an earlier local maximum
        last_trough = tr
        spikes.append(Spike(float(grid[k]), float(grid[tr])))
    return spikes


def find_platforms(
    grid: np.ndarray,
    x: np.ndarray,
    half_width: float = 0.05,
    level_range: tuple[float, float] = (0.3, 0.7),
    min_s: float = 0.3,
    max_s: float = 3.0,
    approach: float = 0.15,
    approach_s: float = 1.0,
    step: float = GRID_S,
) -> list[Platform]:
    """Pauses in a downward pedal sweep.

    A platform holds within ``half_width`` of a level inside ``level_range``
    for ``min_s`` to ``max_s`` seconds, is entered from at least ``approach``
    above the level and left to at least ``approach`` below it, each within
    ``approach_s`` seconds.
    """
    n = len(x)
    reach = int(round(approach_s / step))
    out = []
    i = 0
    while i < n:
        lo = hi = x[i]
        j = i
        while j + 1 < n and max(hi, x[j + 1]) - min(lo, x[j + 1]) <= 2 * half_width:
            j += 1
            lo, hi = min(lo, x[j]), max(hi, x[j])
        level = (lo + hi) / 2
        dur = grid[j] - grid[i]
        if min_s - 1e-9 <= dur <= max_s and level_range[0] <= level <= level_range[1]:
            before = x[max(0, i - reach) : i]
            after = x[j + 1 : j + 1 + reach]
            if len(before) and len(after) and before.max() >= level + approach and after.min() <= level - approach:
                out.append(Platform(float(grid[i]), float(grid[j]), float(level)))
        i = j + 1
    return out


def _smooth(x: np.ndarray, max_median_step: float) -> bool:
    return len(x) > 1 and float(np.median(np.abs(np.diff(x)))) <= max_median_step


def spike_platform_search(
    candidates: Sequence[CandidateSeries],
    episodes: Sequence[tuple[float, float]],
    neighborhood_s: float = 0.5,
    min_distinct: int = MIN_DISTINCT,
    max_median_step: float = 0.02,
    step: float = GRID_S,
    spike_kwargs: dict | None = None,
    platform_kwargs: dict | None = None,
) -> list[SpikePlatformScore]:
    """(rpm, clutch) candidate pairs ranked by standing starts showing both patterns.

    A pair matches an episode when one of the first candidate's spikes, widened
    by ``neighborhood_s`` on both sides of its peak-to-trough interval,
    overlaps a platform of the second candidate. Only smoothly varying
    candidates (median step on the grid at most ``max_median_step``) with at
    least ``min_distinct`` values take part. Ties in matched episodes go to
    finer-resolution candidates (more distinct values), then to key order.
    """
    if not episodes:
        return []
    usable = sorted((c for c in candidates if c.distinct_count >= min_distinct), key=lambda c: c.key)
    if len(usable) < 2:
        return []
    grid, X = align(usable, step)
    spike_kwargs = spike_kwargs or {}
    platform_kwargs = platform_kwargs or {}

    spikes, platforms = {}, {}
    for k, c in enumerate(usable):
        if not _smooth(X[k], max_median_step):
            continue
        sp, pl = [], []
        for t0, t1 in episodes:
            sel = (grid >= t0) & (grid <= t1)
            if sel.sum() < 3:
                sp.append([])
                pl.append([])
                continue
            g, x = grid[sel], X[k, sel]
            sp.append(find_spikes(g, x, step=step, **spike_kwargs))
            pl.append(find_platforms(g, x, step=step, **platform_kwargs))
        if any(sp):
            spikes[k] = sp
        if any(pl):
            platforms[k] = pl

    scores = []
    for a, sp in spikes.items():
        for b, pl in platforms.items():
            if a == b:
                continue
            matched = sum(
                any(
                    p.t_start <= s.t_trough + neighborhood_s and p.t_end >= s.t_peak - neighborhood_s
                    for s in es for p in ep
                )
                for es, ep in zip(sp, pl)
            )
            scores.append(SpikePlatformScore(
                (usable[a].key, usable[b].key), len(episodes), matched,
                sum(map(len, sp)), sum(map(len, pl)),
            ))
    distinct = {c.key: c.distinct_count for c in usable}
    scores.sort(key=lambda s: (-s.matched_episodes, -distinct[s.pair[0]], -distinct[s.pair[1]], s.pair))
    return scores
