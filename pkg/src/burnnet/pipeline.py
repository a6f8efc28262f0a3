"""Run configuration and the cross-validated experiment steps shared by the CLI and tests."""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._version import __version__
from .metrics import (ConfusionMatrix, TrustConfig, TrustRecord, classification_metrics,
                      confusion_from_predictions, multiclass_confusion, qa_trust,
                      trust_density, trust_grid)
from .model import (BINARY, BURN_DEPTHS, MULTICLASS, BurnClass, BurnNetConfig, SourceModel,
                    TargetClassifier, build_classifier, build_source, predict_batch,
                    train_classifier, train_source, transfer_to_classifier)
from .ndtensor import Rng
from .phantom import DataError, LabeledDataset, downsample, generate_dataset, kfold_split, load_image_dir

__all__ = ["RunConfig", "load_config", "PreparedData", "prepare_data", "fold_plan",
           "pretrain", "train_fold", "train_folds", "out_of_fold", "Predictions",
           "run_baselines", "trust_report", "explain"]

# keys that do not change results and so stay out of the config hash
_UNHASHED = ("jobs", "out")


@dataclass
class RunConfig:
    """Every knob of a run.  Read from the ``[run]`` section of an INI file."""

    seed: int = 0
    data: str = "synthetic"
    per_class: int = 80
    rows: int = 213
    cols: int = 338
    factor: int = 10
    task: str = BINARY
    folds: int = 20
    pretrain: bool = True
    freeze_encoder: bool = False
    source_epochs: int = 2000
    epochs: int = 2000
    batch: int = 32
    lr: float = 0.001
    widths: tuple = (4, 8, 8, 16)
    bottleneck: int = 8
    augment: str = "random"
    glcm_levels: int = 32
    svm_c: float = 1.0
    trust_gamma: float = 0.5
    grid_points: int = 201
    jobs: int = 1
    out: str = "run"

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        if self.task not in (BINARY, MULTICLASS):
            raise ValueError(f"task must be {BINARY!r} or {MULTICLASS!r}")
        if len(self.widths) != 4:
            raise ValueError("widths needs four encoder channel counts")
        for name in ("per_class", "factor", "folds", "batch", "bottleneck", "glcm_levels",
                     "grid_points", "jobs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 1 or self.source_epochs < 1:
            raise ValueError("epochs must be positive")
        if self.augment not in ("random", "double", "none"):
            raise ValueError("augment must be random, double or none")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["widths"] = list(self.widths)
        return d

    def config_hash(self) -> str:
        d = {k: v for k, v in self.to_dict().items() if k not in _UNHASHED}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def meta(self) -> dict:
        return {"config_hash": self.config_hash(), "seed": self.seed, "version": __version__}

    def model_config(self) -> BurnNetConfig:
        rows = -(-self.rows // self.factor)
        cols = -(-self.cols // self.factor)
        return BurnNetConfig(input_shape=(1, rows, cols), encoder_channels=self.widths,
                             bottleneck_channels=self.bottleneck,
                             decoder_channels=tuple(reversed(self.widths)),
                             epochs=self.epochs, source_epochs=self.source_epochs,
                             batch=self.batch, lr=self.lr, seed=self.seed,
                             freeze_encoder=self.freeze_encoder)

    def trust_config(self) -> TrustConfig:
        return TrustConfig(gamma=self.trust_gamma, grid_points=self.grid_points)

    def to_ini(self) -> str:
        lines = ["[run]"]
        for k, v in self.to_dict().items():
            if isinstance(v, list):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = "yes" if v else "no"
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"


def _convert(name: str, raw: str, default):
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("1", "yes", "true", "on"):
            return True
        if low in ("0", "no", "false", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(int(x) for x in raw.split(","))
    return raw.strip()


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the ``[run]`` section of ``path``, then ``overrides`` (``None`` values skipped)."""
    defaults = RunConfig()
    values = {}
    if path is not None:
        parser = configparser.ConfigParser()
        if not parser.read(path):
            raise FileNotFoundError(f"config file {path} not found")
        if "run" not in parser:
            raise ValueError(f"{path} has no [run] section")
        known = {f.name for f in dataclasses.fields(RunConfig)}
        for key, raw in parser["run"].items():
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
            values[key] = _convert(key, raw, getattr(defaults, key))
    for key, v in (overrides or {}).items():
        if v is not None:
            values[key] = v
    return RunConfig(**values)


# --------------------------------------------------------------------------
# data
# --------------------------------------------------------------------------

@dataclass
class PreparedData:
    """Downsampled images split into the source set and the burned set used for CV."""

    raw: LabeledDataset
    small: np.ndarray        # (N, 1, rows, cols), burned images only
    depth: np.ndarray        # BurnClass values of ``small``
    target: np.ndarray       # 0/1 (binary) or 0..3 (multiclass)
    unburned: np.ndarray     # (M, 1, rows, cols)
    full: np.ndarray = field(repr=False)  # full-resolution burned images for the baselines


def load_dataset(cfg: RunConfig) -> LabeledDataset:
    if cfg.data == "synthetic":
        return generate_dataset(cfg.per_class, seed=cfg.seed, rows=cfg.rows, cols=cfg.cols)
    ds = load_image_dir(cfg.data)
    if len(ds) == 0:
        raise DataError(f"no images under {cfg.data}")
    return ds


def targets_for(depth: np.ndarray, task: str) -> np.ndarray:
    depth = np.asarray(depth)
    if task == BINARY:
        return (depth == BurnClass.DP).astype(np.int64)
    return np.searchsorted(np.array([int(c) for c in BURN_DEPTHS]), depth).astype(np.int64)


def prepare_data(cfg: RunConfig, dataset: LabeledDataset | None = None) -> PreparedData:
    ds = load_dataset(cfg) if dataset is None else dataset
    expected = (cfg.rows, cfg.cols)
    if ds.images.shape[1:] != expected:
        raise DataError(f"images are {ds.images.shape[1:]}, config expects {expected}")
    burned = np.isin(ds.labels, [int(c) for c in BURN_DEPTHS])
    if not burned.any():
        raise DataError("dataset has no burned images")
    small = np.stack([downsample(img, cfg.factor) for img in ds.images])[:, None]
    depth = ds.labels[burned]
    if cfg.task == MULTICLASS:
        missing = [c.label for c in BURN_DEPTHS if not np.any(depth == c)]
        if missing:
            raise DataError(f"multiclass task needs every depth; missing {', '.join(missing)}")
    return PreparedData(ds, small[burned], depth, targets_for(depth, cfg.task),
                        small[ds.labels == BurnClass.UNBURNED], ds.images[burned])


def fold_plan(cfg: RunConfig, data: PreparedData):
    """Stratified by burn depth so every fold keeps the class mix."""
    return kfold_split(data.depth, cfg.folds, cfg.seed)


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------

def pretrain(cfg: RunConfig, data: PreparedData) -> tuple[SourceModel, list[float]]:
    """Source stage: burned images mapped onto randomly drawn unburned targets."""
    if len(data.unburned) == 0:
        raise DataError("source pre-training needs Unburned images (or pass --no-pretrain)")
    mcfg = cfg.model_config()
    source = build_source(mcfg)
    trace = train_source(source, data.unburned, data.small, mcfg, Rng(cfg.seed, (10,)))
    return source, trace


def train_fold(cfg: RunConfig, data: PreparedData, train_idx, fold: int,
               source: SourceModel | None) -> tuple[TargetClassifier, list[float]]:
    mcfg = cfg.model_config()
    if source is not None:
        clf = transfer_to_classifier(source, cfg.task, frozen=cfg.freeze_encoder)
    else:
        clf = build_classifier(mcfg, cfg.task)
        clf.frozen = cfg.freeze_encoder
    augment = None if cfg.augment == "none" else cfg.augment
    trace = train_classifier(clf, data.small[train_idx], data.target[train_idx], mcfg,
                             Rng(cfg.seed, (20, fold)), augment=augment)
    return clf, trace


def _train_fold_job(cfg, data, train_idx, fold, source):
    import os
    os.environ.setdefault("OMP_NUM_THREADS", "1")
    return train_fold(cfg, data, train_idx, fold, source)


def train_folds(cfg: RunConfig, data: PreparedData, folds, source: SourceModel | None):
    """Train one classifier per fold; folds run in ``cfg.jobs`` processes.

    Each fold has its own RNG stream, so results do not depend on ``jobs``.
    """
    if cfg.jobs == 1:
        return [train_fold(cfg, data, tr, i, source) for i, (tr, _) in enumerate(folds)]
    from joblib import Parallel, delayed
    return Parallel(n_jobs=cfg.jobs)(
        delayed(_train_fold_job)(cfg, data, tr, i, source) for i, (tr, _) in enumerate(folds))


@dataclass
class Predictions:
    """Pooled out-of-fold predictions, one row per burned image."""

    fold: np.ndarray
    depth: np.ndarray
    target: np.ndarray
    predicted: np.ndarray
    confidence: np.ndarray
    probs: np.ndarray   # binary: P(DP), shape (N,); multiclass: (N, 4)
    task: str

    @property
    def correct(self) -> np.ndarray:
        return self.predicted == self.target

    def confusion(self):
        if self.task == BINARY:
            return confusion_from_predictions(self.target, self.predicted)
        return multiclass_confusion(self.target, self.predicted, len(BURN_DEPTHS))

    def scores(self) -> np.ndarray:
        """Ranking score for ROC/PR: P(DP) in both tasks."""
        if self.task == BINARY:
            return self.probs
        return self.probs[:, BURN_DEPTHS.index(BurnClass.DP)]

    def positives(self) -> np.ndarray:
        return self.depth == BurnClass.DP


def out_of_fold(classifiers, data: PreparedData, folds, task: str) -> Predictions:
    n = len(data.target)
    fold_of = np.full(n, -1)
    predicted = np.zeros(n, dtype=np.int64)
    confidence = np.zeros(n)
    probs = np.zeros(n) if task == BINARY else np.zeros((n, len(BURN_DEPTHS)))
    for i, (clf, (_, test)) in enumerate(zip(classifiers, folds)):
        cls, conf, p = predict_batch(clf, data.small[test])
        fold_of[test], predicted[test], confidence[test], probs[test] = i, cls, conf, p
    if np.any(fold_of < 0):
        raise DataError("folds do not cover every image")
    return Predictions(fold_of, data.depth, data.target, predicted, confidence, probs, task)


def binary_report(pred_target, predicted) -> tuple[ConfusionMatrix, dict]:
    cm = confusion_from_predictions(pred_target, predicted)
    return cm, classification_metrics(cm)


# --------------------------------------------------------------------------
# baselines
# --------------------------------------------------------------------------

def run_baselines(cfg: RunConfig, data: PreparedData, folds) -> dict[str, dict]:
    """GLCM features with Fisher LDA and RBF SVM on the same folds (binary DP-vs-rest)."""
    from .texture import GlcmFeatures, FisherLDA, SmoSVC, check_finite_features
    from sklearn.preprocessing import StandardScaler

    F = GlcmFeatures(levels=cfg.glcm_levels).fit_transform(data.full)
    check_finite_features(F)
    y = (data.depth == BurnClass.DP).astype(np.int64)
    out = {}
    for name, make in (("lda", lambda: FisherLDA()), ("svm", lambda: SmoSVC(C=cfg.svm_c))):
        predicted = np.zeros(len(y), dtype=np.int64)
        score = np.zeros(len(y))
        for train, test in folds:
            scaler = StandardScaler().fit(F[train])
            model = make().fit(scaler.transform(F[train]), y[train])
            Xt = scaler.transform(F[test])
            score[test] = model.decision_function(Xt)
            predicted[test] = model.predict(Xt)
        out[name] = {"predicted": predicted, "score": score, "target": y}
    return out


# --------------------------------------------------------------------------
# trust
# --------------------------------------------------------------------------

def class_labels(task: str) -> list[str]:
    return ["Rest", "DP"] if task == BINARY else [c.label for c in BURN_DEPTHS]


def trust_report(pred: Predictions, cfg: TrustConfig = TrustConfig()) -> dict:
    """Question-answer trust per sample, grouped by true class; densities on the default grid."""
    q = np.array([qa_trust(TrustRecord(float(c), bool(ok)), cfg)
                  for c, ok in zip(pred.confidence, pred.correct)])
    names = class_labels(pred.task)
    by_class = {}
    for k, name in enumerate(names):
        values = q[pred.target == k]
        if values.size == 0:
            raise DataError(f"class {name} has no records")
        by_class[name] = values
    spectrum = {name: float(v.mean()) for name, v in by_class.items()}
    grid = trust_grid(cfg)
    density = {"all": trust_density(q, cfg, grid)}
    density.update({name: trust_density(v, cfg, grid) for name, v in by_class.items()})
    return {"trust": q, "spectrum": spectrum,
            "net_trust_score": float(np.mean(list(spectrum.values()))),
            "grid": grid, "density": density}


# --------------------------------------------------------------------------
# explanations
# --------------------------------------------------------------------------

def explain(classifiers, data: PreparedData, folds, task: str) -> dict[str, list]:
    """Guided Grad-CAM++ for every burned image from the model that held it out.

    The explained class is the image's true class.  Returns per-depth lists
    of heatmaps.
    """
    from .saliency import guided_gradcam_pp

    maps = {c.label: [] for c in BURN_DEPTHS}
    for clf, (_, test) in zip(classifiers, folds):
        for i in test:
            hm = guided_gradcam_pp(clf, data.small[i], int(data.target[i]))
            maps[BurnClass(int(data.depth[i])).label].append(hm)
    return maps
