"""Shared pipeline parameters and their digest."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .decomposer import DEFAULT_MIN_VARIATION, DEFAULT_OVERLAP, DEFAULT_WINDOW_S
from .features import DEFAULT_MAX_BINS, FeatureSpec
from .tsmatch import DEFAULT_MAX_JUMP_KMH


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int = 12
    min_samples_leaf: int = 2
    features_per_split: int | None = None  # None: ceil(sqrt(d))
    bootstrap: bool = True
    samples_per_class: int | None = None  # per tree; None: size of the smaller class

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 0 or self.min_samples_leaf < 1:
            raise ValueError(f"invalid forest parameters {self}")
        if self.samples_per_class is not None and self.samples_per_class < 1:
            raise ValueError("samples_per_class must be >= 1")
        if self.features_per_split is not None and self.features_per_split < 1:
            raise ValueError("features_per_split must be >= 1")


@dataclass(frozen=True)
class PipelineConfig:
    window_s: float = DEFAULT_WINDOW_S
    overlap: float = DEFAULT_OVERLAP
    min_variation: int = DEFAULT_MIN_VARIATION
    max_bins: int = DEFAULT_MAX_BINS
    max_jump: float = DEFAULT_MAX_JUMP_KMH
    little_endian: bool = False  # also try little-endian byte pairs
    drop_redundant_pairs: bool = True
    feature_set: str = "full15"
    cid_ce: bool = False
    forest: ForestParams = ForestParams(samples_per_class=4000)
    seed: int = 0

    def __post_init__(self):
        if self.window_s <= 0:
            raise ValueError("window_s must be positive")
        if not 0 <= self.overlap < 1:
            raise ValueError("overlap must be in [0, 1)")
        if self.min_variation < 1:
            raise ValueError("min_variation must be >= 1")
        if self.max_bins < 1:
            raise ValueError("max_bins must be >= 1")
        if self.max_jump <= 0:
            raise ValueError("max_jump must be positive")
        self.feature_spec  # validates the feature set name

    @property
    def feature_spec(self) -> FeatureSpec:
        return FeatureSpec.named(self.feature_set, cid_ce=self.cid_ce, max_bins=self.max_bins)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> PipelineConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "forest" in d:
            d["forest"] = ForestParams(**d["forest"])
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @property
    def hash(self) -> str:
        """sha256 over the canonical JSON form; 16 hex digits."""
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def with_(self, **changes) -> PipelineConfig:
        return replace(self, **changes)


def load_config(path: str | Path) -> PipelineConfig:
    return PipelineConfig.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def dump_config(config: PipelineConfig, path: str | Path) -> None:
    Path(path).write_text(config.to_json(), encoding="utf-8")
