"""Plain binary checkpoint container.

Layout::

    BURNNET-CKPT 1\\n
    <header: one line of JSON, sorted keys>\\n
    <float64 little-endian values of every tensor, row-major, in header order>

The header holds ``{"meta": {...}, "tensors": [{"name": ..., "shape": [...]}, ...]}``.
Nothing time-dependent is written, so equal models give equal bytes.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .model import (BurnNetConfig, SourceModel, TargetClassifier, build_decoder,
                    build_encoder, _head)
from .ndtensor import Rng

MAGIC = b"BURNNET-CKPT 1\n"

__all__ = ["save_tensors", "load_tensors", "save_classifier", "load_classifier",
           "save_source", "load_source", "CheckpointError"]


class CheckpointError(ValueError):
    pass


def save_tensors(path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    header = {"meta": meta or {},
              "tensors": [{"name": k, "shape": list(np.shape(v))} for k, v in tensors.items()]}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n")
        for v in tensors.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_tensors(path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path} is not a BurnNet checkpoint")
    end = raw.index(b"\n", len(MAGIC))
    header = json.loads(raw[len(MAGIC):end])
    offset = end + 1
    tensors = {}
    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        nbytes = 8 * count
        if offset + nbytes > len(raw):
            raise CheckpointError(f"{path} is truncated at tensor {entry['name']}")
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
        tensors[entry["name"]] = arr.reshape(entry["shape"]).astype(np.float64)
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{path} has {len(raw) - offset} trailing bytes")
    return tensors, header["meta"]


def _assign(params, tensors, path):
    names = [n for n, _ in params]
    if sorted(names) != sorted(tensors):
        raise CheckpointError(f"{path}: stored tensors do not match the model layout")
    for name, t in params:
        if tensors[name].shape != t.shape:
            raise CheckpointError(f"{path}: {name} has shape {tensors[name].shape}, expected {t.shape}")
        t.data[...] = tensors[name]


def save_classifier(path, clf: TargetClassifier, meta: dict | None = None) -> None:
    info = {"kind": "classifier", "mode": clf.mode, "frozen": clf.frozen,
            "config": clf.cfg.to_dict(), **(meta or {})}
    save_tensors(path, {n: t.data for n, t in clf.params()}, info)


def load_classifier(path) -> tuple[TargetClassifier, dict]:
    tensors, meta = load_tensors(path)
    if meta.get("kind") != "classifier":
        raise CheckpointError(f"{path} does not hold a classifier")
    cfg = BurnNetConfig(**meta["config"])
    clf = TargetClassifier(cfg, build_encoder(cfg, Rng(0)), _head(cfg, meta["mode"], Rng(0)),
                           meta["mode"], meta.get("frozen", False))
    _assign(clf.params(), tensors, path)
    return clf, meta


def save_source(path, model: SourceModel, meta: dict | None = None) -> None:
    info = {"kind": "source", "config": model.cfg.to_dict(),
            "trained_epochs": model.trained_epochs, **(meta or {})}
    save_tensors(path, {n: t.data for n, t in model.params()}, info)


def load_source(path) -> tuple[SourceModel, dict]:
    tensors, meta = load_tensors(path)
    if meta.get("kind") != "source":
        raise CheckpointError(f"{path} does not hold a source model")
    cfg = BurnNetConfig(**meta["config"])
    model = SourceModel(cfg, build_encoder(cfg, Rng(0)), build_decoder(cfg, Rng(0)),
                        meta.get("trained_epochs", 0))
    _assign(model.params(), tensors, path)
    return model, meta
