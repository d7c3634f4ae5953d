"""Statistical features over window samples.

All features are computed row-wise on a 2-D array of equal-length windows;
single windows go through the same code as a one-row batch, so a window's
vector does not depend on what it was batched with.

Conventions: comparisons against the mean are strict, moments are
population moments, kurtosis is excess kurtosis, and constant windows give 0
for entropy, skewness and kurtosis.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

FEATURES: tuple[str, ...] = (
    "count_above_mean",
    "count_below_mean",
    "longest_strike_above_mean",
    "longest_strike_below_mean",
    "binned_entropy",
    "mean_abs_change",
    "mean_change",
    "minimum",
    "maximum",
    "mean",
    "median",
    "standard_deviation",
    "variance",
    "kurtosis",
    "skewness",
)

REID_FEATURES: tuple[str, ...] = (
    "count_above_mean",
    "count_below_mean",
    "longest_strike_above_mean",
    "longest_strike_below_mean",
    "mean_abs_change",
    "minimum",
    "maximum",
    "mean",
    "median",
    "standard_deviation",
    "variance",
)

# Not part of any default spec.
EXTRA_FEATURES: tuple[str, ...] = ("cid_ce",)

DEFAULT_MAX_BINS = 10

_EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class FeatureSpec:
    names: tuple[str, ...] = FEATURES
    max_bins: int = DEFAULT_MAX_BINS

    def __post_init__(self):
        names = tuple(self.names)
        unknown = [n for n in names if n not in FEATURES and n not in EXTRA_FEATURES]
        if unknown:
            raise ValueError(f"unknown features: {unknown}")
        if len(set(names)) != len(names):
            raise ValueError("duplicate feature names")
        order = {n: i for i, n in enumerate(FEATURES + EXTRA_FEATURES)}
        object.__setattr__(self, "names", tuple(sorted(names, key=order.__getitem__)))
        if self.max_bins < 1:
            raise ValueError("max_bins must be >= 1")

    @classmethod
    def named(cls, name: str, max_bins: int = DEFAULT_MAX_BINS, cid_ce: bool = False) -> FeatureSpec:
        presets = {"full15": FEATURES, "reid11": REID_FEATURES}
        if name not in presets:
            raise ValueError(f"unknown feature spec {name!r}; choose from {sorted(presets)}")
        names = presets[name] + (("cid_ce",) if cid_ce else ())
        return cls(names, max_bins)

    def __len__(self) -> int:
        return len(self.names)

    def to_dict(self) -> dict:
        return {"names": list(self.names), "max_bins": self.max_bins}


FULL_SPEC = FeatureSpec(FEATURES)
REID_SPEC = FeatureSpec(REID_FEATURES)


@dataclass(frozen=True, eq=False)
class FeatureVector:
    source: object
    t_start: float
    values: np.ndarray
    names: tuple[str, ...]


# --- single-series helpers -------------------------------------------------


def count_above_mean(x) -> int:
    return int(_batch(x, ("count_above_mean",))[0, 0])


def count_below_mean(x) -> int:
    return int(_batch(x, ("count_below_mean",))[0, 0])


def longest_strike_above_mean(x) -> int:
    return int(_batch(x, ("longest_strike_above_mean",))[0, 0])


def longest_strike_below_mean(x) -> int:
    return int(_batch(x, ("longest_strike_below_mean",))[0, 0])


def binned_entropy(x, max_bins: int = DEFAULT_MAX_BINS) -> float:
    return float(_batch(x, ("binned_entropy",), max_bins)[0, 0])


def mean_abs_change(x) -> float:
    return float(_batch(x, ("mean_abs_change",))[0, 0])


def mean_change(x) -> float:
    return float(_batch(x, ("mean_change",))[0, 0])


def cid_ce(x) -> float:
    return float(_batch(x, ("cid_ce",))[0, 0])


def moments_and_order_stats(x) -> tuple[float, ...]:
    """(min, max, mean, median, std, variance, kurtosis, skewness)."""
    names = ("minimum", "maximum", "mean", "median", "standard_deviation", "variance", "kurtosis", "skewness")
    row = feature_matrix(np.asarray(x, dtype=np.float64)[None, :], names)[0]
    by_name = dict(zip(FeatureSpec(names).names, row.tolist()))
    return tuple(by_name[n] for n in names)


def _exact_sign_vs_mean(row: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Sign of row[j] - mean(row) for j in ``cols``, in exact integer arithmetic."""
    mant, exp = np.frexp(row)
    ints = np.ldexp(mant, 53).astype(np.int64)  # exact: 53-bit significands
    shift = exp - exp.min()
    vals = [int(i) << int(k) for i, k in zip(ints, shift)]
    total, n = sum(vals), len(vals)
    return np.array([(n * vals[j] > total) - (n * vals[j] < total) for j in cols], dtype=np.int8)


def _batch(x, names, max_bins=DEFAULT_MAX_BINS) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or len(x) == 0:
        raise ValueError("expected a non-empty 1-D series")
    return feature_matrix(x[None, :], names, max_bins)


# --- batch computation -------------------------------------------------------


def feature_matrix(X: np.ndarray, names: Sequence[str] = FEATURES, max_bins: int = DEFAULT_MAX_BINS) -> np.ndarray:
    """Features for each row of ``X`` (m windows x n samples), columns in canonical order."""
    X = np.asarray(X, dtype=np.float64)
    spec_names = FeatureSpec(tuple(names), max_bins).names
    m, n = X.shape
    if n == 0:
        raise ValueError("windows must be non-empty")

    lo = X.min(axis=1)
    hi = X.max(axis=1)
    const = lo == hi
    mean = X.mean(axis=1)
    mean[const] = lo[const]

    cache: dict[str, np.ndarray] = {}

    def centred():
        if "c" not in cache:
            c = X - mean[:, None]
            c[const] = 0.0
            cache["c"] = c
        return cache["c"]

    def sign():
        # Sign of x - mean with the mean taken exactly. The float mean is off
        # by at most about n ulps of max|x|; only entries that close are re-decided.
        if "sign" not in cache:
            tol = (n + 2) * _EPS * np.abs(X).max(axis=1, initial=0.0)
            c = centred()
            sg = np.sign(c).astype(np.int8)
            close = (np.abs(c) <= tol[:, None]) & ~const[:, None]
            for r in np.flatnonzero(close.any(axis=1)):
                cols = np.flatnonzero(close[r])
                sg[r, cols] = _exact_sign_vs_mean(X[r], cols)
            cache["sign"] = sg
        return cache["sign"]

    def side(above: bool):
        return sign() > 0 if above else sign() < 0

    def moment(k: int):
        key = f"m{k}"
        if key not in cache:
            cache[key] = (centred() ** k).mean(axis=1)
        return cache[key]

    cols = []
    for name in spec_names:
        if name == "count_above_mean":
            col = side(True).sum(axis=1).astype(np.float64)
        elif name == "count_below_mean":
            col = side(False).sum(axis=1).astype(np.float64)
        elif name == "longest_strike_above_mean":
            col = _longest_run(side(True))
        elif name == "longest_strike_below_mean":
            col = _longest_run(side(False))
        elif name == "binned_entropy":
            col = _binned_entropy(X, lo, hi, max_bins)
        elif name == "mean_abs_change":
            col = np.abs(np.diff(X, axis=1)).mean(axis=1) if n > 1 else np.zeros(m)
        elif name == "mean_change":
            col = (X[:, -1] - X[:, 0]) / (n - 1) if n > 1 else np.zeros(m)
        elif name == "cid_ce":
            col = np.sqrt((np.diff(X, axis=1) ** 2).sum(axis=1))
        elif name == "minimum":
            col = lo.copy()
        elif name == "maximum":
            col = hi.copy()
        elif name == "mean":
            col = mean.copy()
        elif name == "median":
            col = np.median(X, axis=1)
        elif name == "variance":
            col = moment(2).copy()
        elif name == "standard_deviation":
            col = np.sqrt(moment(2))
        elif name == "skewness":
            col = _ratio(moment(3), moment(2) ** 1.5, const)
        elif name == "kurtosis":
            col = _ratio(moment(4), moment(2) ** 2, const) - np.where(const, 0.0, 3.0)
        cols.append(col)
    return np.column_stack(cols) if cols else np.empty((m, 0))


def _ratio(num, den, const):
    out = np.zeros_like(num)
    ok = ~const & (den > 0)
    out[ok] = num[ok] / den[ok]
    return out


def _longest_run(mask: np.ndarray) -> np.ndarray:
    counts = np.cumsum(mask, axis=1)
    resets = np.maximum.accumulate(np.where(mask, 0, counts), axis=1)
    return (counts - resets).max(axis=1).astype(np.float64)


def bin_edges(lo: float, hi: float, max_bins: int) -> list[float]:
    """Interior edges of ``max_bins`` equal-width bins over [lo, hi]."""
    return [lo + (hi - lo) * k / max_bins for k in range(1, max_bins)]


def _binned_entropy(X, lo, hi, max_bins) -> np.ndarray:
    m, n = X.shape
    k = np.arange(1, max_bins, dtype=np.float64)
    edges = lo[:, None] + (hi - lo)[:, None] * k[None, :] / max_bins
    # bin index = number of interior edges at or below the value; max lands in the last bin
    idx = (X[:, :, None] >= edges[:, None, :]).sum(axis=2)
    flat = idx + (np.arange(m) * max_bins)[:, None]
    counts = np.bincount(flat.ravel(), minlength=m * max_bins).reshape(m, max_bins)
    p = counts / n
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    h = -terms.sum(axis=1)
    h[lo == hi] = 0.0
    return h + 0.0


# --- window-level API --------------------------------------------------------


def extract(window, spec: FeatureSpec = FULL_SPEC) -> FeatureVector:
    values = feature_matrix(np.asarray(window.values, dtype=np.float64)[None, :], spec.names, spec.max_bins)[0]
    return FeatureVector(window.source, window.t_start, values, spec.names)


def extract_many(windows: Sequence, spec: FeatureSpec = FULL_SPEC) -> np.ndarray:
    """Feature matrix for many windows, rows aligned with ``windows``."""
    out = np.empty((len(windows), len(spec)))
    groups: dict[int, list[int]] = defaultdict(list)
    for i, w in enumerate(windows):
        groups[len(w.values)].append(i)
    for rows in groups.values():
        for chunk in range(0, len(rows), _CHUNK):
            part = rows[chunk : chunk + _CHUNK]
            X = np.stack([windows[i].values for i in part])
            out[part] = feature_matrix(X, spec.names, spec.max_bins)
    return out


_CHUNK = 1024
