"""Synthetic B-mode speckle phantoms, image-directory ingestion, preprocessing and CV splits.

A phantom row index is depth, a column index is lateral position.  The
intensity model is

    I(r, c) = clip( E(r) * (1 + a * [r < d * rows] * R(r, c)), 0, 1 )

with ``E`` a bright entry band followed by exponential attenuation, and ``R``
a Rayleigh field smoothed by a separable Gaussian and standardized to zero
mean and unit variance.  Speckle contrast ``a`` and speckled depth fraction
``d`` grow with burn severity.
"""
from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .model import BurnClass
from .ndtensor import Rng

log = logging.getLogger(__name__)

__all__ = [
    "PhantomParams", "DEFAULT_PARAMS", "UltrasoundImage", "LabeledDataset",
    "depth_profile_envelope", "generate_phantom", "generate_dataset",
    "downsample", "hflip", "augment", "kfold_split",
    "load_image_dir", "write_dataset", "DataError",
]


class DataError(ValueError):
    """Bad or inconsistent input data (unreadable files, mixed sizes, unknown classes)."""


@dataclass(frozen=True)
class PhantomParams:
    contrast: dict = field(default_factory=lambda: {
        BurnClass.UNBURNED: 0.15, BurnClass.SP: 0.30, BurnClass.DP: 0.45,
        BurnClass.LFT: 0.60, BurnClass.DFT: 0.80})
    depth_fraction: dict = field(default_factory=lambda: {
        BurnClass.UNBURNED: 0.25, BurnClass.SP: 0.35, BurnClass.DP: 0.55,
        BurnClass.LFT: 0.75, BurnClass.DFT: 1.0})
    attenuation: float = 1.2
    correlation_length: float = 3.0
    entry_brightness: float = 0.9
    tissue_brightness: float = 0.5

    def __post_init__(self):
        order = list(BurnClass)
        for name, table in (("contrast", self.contrast), ("depth_fraction", self.depth_fraction)):
            vals = [table[c] for c in order]
            if any(not 0.0 <= v <= 1.0 for v in vals):
                raise ValueError(f"{name} values must lie in [0, 1]")
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ValueError(f"{name} must strictly increase from Unburned to DFT")
        if self.correlation_length <= 0 or self.attenuation < 0:
            raise ValueError("correlation_length must be > 0 and attenuation >= 0")

    def with_uniform_contrast(self, value: float) -> PhantomParams:
        """Copy with every class' contrast pinned to ``value`` (skips the monotonicity check)."""
        obj = object.__new__(PhantomParams)
        for k, v in self.__dict__.items():
            object.__setattr__(obj, k, v)
        object.__setattr__(obj, "contrast", {c: value for c in BurnClass})
        return obj


DEFAULT_PARAMS = PhantomParams()


@dataclass
class UltrasoundImage:
    pixels: np.ndarray
    provenance: str = "memory"
    seed: int | None = None

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 2 or self.pixels.size == 0:
            raise ValueError(f"expected a non-empty 2-D image, got shape {self.pixels.shape}")
        if self.pixels.min() < 0.0 or self.pixels.max() > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")

    @property
    def rows(self) -> int:
        return self.pixels.shape[0]

    @property
    def cols(self) -> int:
        return self.pixels.shape[1]


@dataclass
class LabeledDataset:
    """Stack of equally sized images with one :class:`BurnClass` label each."""

    images: np.ndarray
    labels: np.ndarray
    name: str = "dataset"
    provenance: list[str] = field(default_factory=list)
    seeds: list = field(default_factory=list)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim == 2 and self.images.size == 0:
            self.images = self.images.reshape(0, 0, 0)
        if self.images.ndim != 3:
            raise DataError(f"images must be stacked as (N, rows, cols), got {self.images.shape}")
        if len(self.labels) != len(self.images):
            raise DataError("one label per image required")
        if not self.provenance:
            self.provenance = ["memory"] * len(self.labels)
        if not self.seeds:
            self.seeds = [None] * len(self.labels)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def items(self):
        return [(UltrasoundImage(img, p, s), BurnClass(int(c)))
                for img, c, p, s in zip(self.images, self.labels, self.provenance, self.seeds)]

    def class_counts(self) -> dict[BurnClass, int]:
        values, counts = np.unique(self.labels, return_counts=True)
        return {BurnClass(int(v)): int(n) for v, n in zip(values, counts)}

    def subset(self, index, name: str | None = None) -> LabeledDataset:
        index = np.asarray(index, dtype=np.int64)
        return LabeledDataset(self.images[index], self.labels[index], name or self.name,
                              [self.provenance[i] for i in index], [self.seeds[i] for i in index])

    def select(self, classes) -> LabeledDataset:
        keep = np.flatnonzero(np.isin(self.labels, [int(c) for c in classes]))
        return self.subset(keep)

    def map_images(self, fn) -> LabeledDataset:
        images = np.stack([fn(img) for img in self.images]) if len(self) else self.images
        return LabeledDataset(images, self.labels.copy(), self.name,
                              list(self.provenance), list(self.seeds))


def depth_profile_envelope(rows: int, params: PhantomParams = DEFAULT_PARAMS) -> np.ndarray:
    """Deterministic per-row brightness ``E(r)``."""
    band = math.ceil(0.05 * rows)
    r = np.arange(rows, dtype=np.float64)
    env = params.tissue_brightness * np.exp(-params.attenuation * (r - band) / rows)
    env[:band] = params.entry_brightness
    return env


def generate_phantom(cls: BurnClass, params: PhantomParams = DEFAULT_PARAMS,
                     rng: Rng | None = None, rows: int = 213, cols: int = 338) -> UltrasoundImage:
    cls = BurnClass(cls)
    rng = rng or Rng(0, (int(cls),))
    a = params.contrast[cls]
    d = params.depth_fraction[cls]
    env = depth_profile_envelope(rows, params)[:, None]
    field_ = gaussian_filter(rng.rayleigh(1.0, size=(rows, cols)),
                             params.correlation_length, mode="reflect")
    std = field_.std()
    field_ = (field_ - field_.mean()) / (std if std > 0 else 1.0)
    mask = (np.arange(rows) < d * rows)[:, None]
    img = np.clip(env * (1.0 + a * mask * field_), 0.0, 1.0)
    return UltrasoundImage(img, f"synthetic({rng.seed},{cls.label})", rng.seed)


def generate_dataset(per_class: int, classes=tuple(BurnClass), seed: int = 0,
                     params: PhantomParams = DEFAULT_PARAMS, rows: int = 213, cols: int = 338,
                     name: str = "phantoms") -> LabeledDataset:
    """``per_class`` phantoms per class; phantom ``i`` of class ``c`` uses stream ``(seed, c, i)``."""
    if per_class < 0:
        raise ValueError("per_class must be non-negative")
    images, labels, prov, seeds = [], [], [], []
    for c in classes:
        c = BurnClass(c)
        for i in range(per_class):
            img = generate_phantom(c, params, Rng(seed, (int(c), i)), rows, cols)
            images.append(img.pixels)
            labels.append(int(c))
            prov.append(f"synthetic:{c.label}:{i}")
            seeds.append(seed)
    stack = np.stack(images) if images else np.zeros((0, rows, cols))
    return LabeledDataset(stack, np.array(labels, dtype=np.int64), name, prov, seeds)


def downsample(img, factor: int = 10) -> np.ndarray:
    """Block-mean downsampling to ``ceil(extent / factor)``; edge blocks are truncated."""
    if int(factor) != factor or factor < 1:
        raise ValueError("factor must be a positive integer")
    pixels = img.pixels if isinstance(img, UltrasoundImage) else np.asarray(img, dtype=np.float64)
    if factor == 1:
        return pixels.copy()
    rows, cols = pixels.shape
    r_idx, c_idx = np.arange(0, rows, factor), np.arange(0, cols, factor)
    sums = np.add.reduceat(np.add.reduceat(pixels, r_idx, axis=0), c_idx, axis=1)
    r_n = np.diff(np.append(r_idx, rows))
    c_n = np.diff(np.append(c_idx, cols))
    return sums / np.outer(r_n, c_n)


def hflip(img) -> np.ndarray:
    """Reverse the lateral (column) axis."""
    pixels = img.pixels if isinstance(img, UltrasoundImage) else np.asarray(img)
    return pixels[..., ::-1].copy()


def augment(dataset: LabeledDataset) -> LabeledDataset:
    """Dataset followed by its lateral flips; labels are carried over."""
    flipped = dataset.images[..., ::-1]
    return LabeledDataset(np.concatenate([dataset.images, flipped]),
                          np.concatenate([dataset.labels, dataset.labels]),
                          dataset.name + "+hflip",
                          list(dataset.provenance) + [p + ":hflip" for p in dataset.provenance],
                          list(dataset.seeds) * 2)


def kfold_split(labels, k: int = 20, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Stratified, seeded k-fold partition of sample indices.

    Each class is shuffled, the class lists are concatenated, and position
    ``j`` of the concatenation goes to fold ``j mod k``; per-fold class counts
    therefore differ from the global proportion by less than one sample.
    """
    if isinstance(labels, LabeledDataset):
        labels = labels.labels
    labels = np.asarray(labels)
    if k < 2:
        raise ValueError("k must be at least 2")
    rng = Rng(seed, (30,))
    sequence = []
    for value in np.unique(labels):
        members = np.flatnonzero(labels == value)
        if len(members) < k:
            try:
                name = BurnClass(int(value)).label
            except ValueError:
                name = str(value)
            raise DataError(f"class {name} has {len(members)} samples, fewer than k={k}")
        sequence.append(members[rng.child(int(value)).permutation(len(members))])
    order = np.concatenate(sequence) if sequence else np.zeros(0, dtype=np.int64)
    fold_of = np.empty(len(labels), dtype=np.int64)
    fold_of[order] = np.arange(len(order)) % k
    all_idx = np.arange(len(labels))
    return [(all_idx[fold_of != f], all_idx[fold_of == f]) for f in range(k)]


_RASTER_SUFFIXES = {".png", ".pgm", ".tif", ".tiff", ".bmp"}


def read_manifest(path) -> dict[str, BurnClass]:
    """Two-column CSV ``directory,class`` mapping sub-directories to classes."""
    mapping = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#") or row[0].strip() == "directory":
                continue
            if len(row) < 2:
                raise DataError(f"manifest row {row!r} needs two columns")
            mapping[row[0].strip()] = BurnClass.parse(row[1])
    return mapping


def load_image_dir(path, manifest=None, name: str | None = None) -> LabeledDataset:
    """Read a class-per-directory tree of 8-bit grayscale rasters, scaled by 1/255.

    ``manifest`` is a dict or a CSV path mapping directory names to classes;
    without one, directory names must themselves be class names.
    """
    from PIL import Image

    root = Path(path)
    if not root.is_dir():
        raise DataError(f"{root} is not a directory")
    if manifest is None and (root / "manifest.csv").exists():
        manifest = root / "manifest.csv"
    if manifest is not None and not isinstance(manifest, dict):
        manifest = read_manifest(manifest)

    images, labels, prov = [], [], []
    unknown, unreadable = [], []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        if manifest is not None:
            cls = manifest.get(sub.name)
        else:
            try:
                cls = BurnClass.parse(sub.name)
            except ValueError:
                cls = None
        if cls is None:
            unknown.append(sub.name)
            continue
        for f in sorted(sub.iterdir()):
            if f.suffix.lower() not in _RASTER_SUFFIXES:
                continue
            try:
                with Image.open(f) as im:
                    if im.mode not in ("L", "P", "1"):
                        raise DataError(f"mode {im.mode} is not 8-bit grayscale")
                    arr = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
            except Exception as exc:  # noqa: BLE001 - collect every offender
                unreadable.append(f"{f} ({exc})")
                continue
            images.append(arr)
            labels.append(int(cls))
            prov.append(f"file:{f.relative_to(root)}")
    if unknown:
        raise DataError(f"unknown class directories: {', '.join(unknown)}")
    if unreadable:
        raise DataError("unreadable images: " + "; ".join(unreadable))
    if not images:
        warnings.warn(f"no images found under {root}", stacklevel=2)
        return LabeledDataset(np.zeros((0, 0, 0)), np.zeros(0, dtype=np.int64), name or root.name)
    shapes = {}
    for p, img in zip(prov, images):
        shapes.setdefault(img.shape, []).append(p)
    if len(shapes) > 1:
        common = max(shapes, key=lambda s: len(shapes[s]))
        odd = [p for s, ps in shapes.items() if s != common for p in ps]
        raise DataError(f"mixed image dimensions; expected {common}, offenders: {', '.join(odd)}")
    return LabeledDataset(np.stack(images), np.array(labels), name or root.name, prov)


def write_dataset(dataset: LabeledDataset, outdir, extra_meta: dict | None = None) -> Path:
    """Write ``<class>/<nnnn>.png`` rasters plus ``index.csv`` and ``manifest.csv``."""
    from PIL import Image

    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    counters: dict[int, int] = {}
    for img, label, prov, seed in zip(dataset.images, dataset.labels, dataset.provenance,
                                      dataset.seeds):
        cls = BurnClass(int(label))
        n = counters.get(int(label), 0)
        counters[int(label)] = n + 1
        rel = f"{cls.label}/{n:04d}.png"
        (out / cls.label).mkdir(exist_ok=True)
        pixels = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
        Image.fromarray(pixels, mode="L").save(out / rel, optimize=False)
        rows.append((rel, cls.label, prov, "" if seed is None else seed))
    with open(out / "index.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for k, v in sorted((extra_meta or {}).items()):
            fh.write(f"# {k}={v}\n")
        w.writerow(["filename", "class", "provenance", "seed"])
        w.writerows(rows)
    with open(out / "manifest.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["directory", "class"])
        for c in sorted({BurnClass(int(l)) for l in dataset.labels}):
            w.writerow([c.label, c.label])
    return out
