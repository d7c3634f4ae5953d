"""Binary model files (``.cmf``) holding a trained signal model.

Layout::

    b"CANLIFTM"  magic
    u16          format version
    u32          header length, then that many bytes of UTF-8 JSON
    per tree:    u32 node count, node records, f8 importance per feature

A node record is ``feature u2 | threshold f8 | left i4 | right i4 | prob f8``
(little-endian); ``feature == 0xFFFF`` marks a leaf.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..config import ForestParams, PipelineConfig
from .forest import Forest
from .matching import ConfigMismatch, SignalModel
from .tree import LEAF, DecisionTree

MAGIC = b"CANLIFTM"
FORMAT_VERSION = 1
LEAF_CODE = 0xFFFF

NODE_DTYPE = np.dtype([("feature", "<u2"), ("threshold", "<f8"), ("left", "<i4"), ("right", "<i4"), ("prob", "<f8")])


class ModelFormatError(ValueError):
    pass


def _header(model: SignalModel) -> dict:
    f = model.forest
    return {
        "signal": model.signal,
        "base_truth": model.base_truth,
        "config": model.config.to_dict(),
        "config_hash": model.config_hash,
        "feature_names": list(f.feature_names),
        "forest_params": asdict(f.params),
        "seed": f.seed,
        "label": f.label,
        "oob_score": f.oob_score,
        "samples_per_class": f.samples_per_class,
        "n_trees": len(f.trees),
        "n_features": f.n_features,
    }


def model_bytes(model: SignalModel) -> bytes:
    header = json.dumps(_header(model), sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<HI", FORMAT_VERSION, len(header)), header]
    d = model.forest.n_features
    for tree in model.forest.trees:
        rec = np.zeros(len(tree), dtype=NODE_DTYPE)
        rec["feature"] = np.where(tree.feature == LEAF, LEAF_CODE, tree.feature)
        rec["threshold"] = tree.threshold
        rec["left"] = tree.left
        rec["right"] = tree.right
        rec["prob"] = tree.prob
        imp = tree.importance if tree.importance is not None else np.zeros(d)
        parts += [struct.pack("<I", len(tree)), rec.tobytes(), np.asarray(imp, dtype="<f8").tobytes()]
    return b"".join(parts)


def save_model(model: SignalModel, path: str | Path) -> None:
    Path(path).write_bytes(model_bytes(model))


def model_from_bytes(data: bytes, expect_hash: str | None = None) -> SignalModel:
    """Decode a model; refuse it if ``expect_hash`` is given and differs."""
    if data[: len(MAGIC)] != MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    pos = len(MAGIC)
    try:
        version, hlen = struct.unpack_from("<HI", data, pos)
        pos += 6
        if version != FORMAT_VERSION:
            raise ModelFormatError(f"unsupported model format version {version}")
        header = json.loads(data[pos : pos + hlen].decode("utf-8"))
        pos += hlen
        config = PipelineConfig.from_dict(header["config"])
        if config.hash != header["config_hash"]:
            raise ModelFormatError("stored config does not match its hash")
        if expect_hash is not None and expect_hash != config.hash:
            raise ConfigMismatch(f"model config {config.hash} differs from requested {expect_hash}")
        d = header["n_features"]
        trees = []
        for _ in range(header["n_trees"]):
            (n,) = struct.unpack_from("<I", data, pos)
            pos += 4
            if pos + n * NODE_DTYPE.itemsize + 8 * d > len(data):
                raise ModelFormatError("truncated model file")
            rec = np.frombuffer(data, dtype=NODE_DTYPE, count=n, offset=pos)
            pos += n * NODE_DTYPE.itemsize
            imp = np.frombuffer(data, dtype="<f8", count=d, offset=pos).astype(np.float64)
            pos += 8 * d
            raw = rec["feature"].astype(np.int32)
            feature = np.where(raw == LEAF_CODE, LEAF, raw).astype(np.int32)
            trees.append(DecisionTree(
                feature, rec["threshold"].astype(np.float64), rec["left"].astype(np.int32),
                rec["right"].astype(np.int32), rec["prob"].astype(np.float64), d,
                config.forest.max_depth, config.forest.min_samples_leaf, imp,
            ))
    except (struct.error, KeyError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"truncated or corrupt model file: {exc}") from exc
    if pos != len(data):
        raise ModelFormatError("trailing bytes after the last tree")
    forest = Forest(
        tuple(trees), ForestParams(**header["forest_params"]), header["seed"],
        tuple(header["feature_names"]), header["label"], header["oob_score"], header["samples_per_class"],
    )
    return SignalModel(header["signal"], forest, config, header["base_truth"])


def load_model(path: str | Path, expect_hash: str | None = None) -> SignalModel:
    return model_from_bytes(Path(path).read_bytes(), expect_hash)
