"""Confusion-matrix metrics, ROC/PR curves, and question-answer trust quantification."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ConfusionMatrix", "confusion_from_predictions", "multiclass_confusion",
    "classification_metrics", "multiclass_accuracy", "METRIC_NAMES",
    "Curve", "roc_curve", "pr_curve", "mann_whitney_auc",
    "TrustRecord", "TrustConfig", "qa_trust", "trust_density", "trust_grid",
    "trust_spectrum", "net_trust_score",
]

METRIC_NAMES = ("accuracy", "sensitivity", "specificity", "f_score", "mcc")


@dataclass(frozen=True)
class ConfusionMatrix:
    """Binary counts; positive = the class of interest (DP)."""

    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def as_array(self) -> np.ndarray:
        """``[[tp, fp], [fn, tn]]``: rows = predicted (positive, negative), cols = actual."""
        return np.array([[self.tp, self.fp], [self.fn, self.tn]])


def confusion_from_predictions(y_true, y_pred, positive=1) -> ConfusionMatrix:
    t = np.asarray(y_true) == positive
    p = np.asarray(y_pred) == positive
    return ConfusionMatrix(int((t & p).sum()), int((~t & p).sum()),
                           int((t & ~p).sum()), int((~t & ~p).sum()))


def multiclass_confusion(y_true, y_pred, n_classes: int) -> np.ndarray:
    """``cm[true, predicted]`` counts."""
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
    return cm


def _ratio(num, den):
    return num / den if den else float("nan")


def classification_metrics(cm: ConfusionMatrix) -> dict[str, float]:
    """Accuracy, sensitivity, specificity, F-score and Matthews correlation.

    MCC is 0 when any marginal is empty; sensitivity/specificity are NaN when
    their denominators are.
    """
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    tp, fp, fn, tn = cm.tp, cm.fp, cm.fn, cm.tn
    den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    return {
        "accuracy": (tp + tn) / cm.total,
        "sensitivity": _ratio(tp, tp + fn),
        "specificity": _ratio(tn, tn + fp),
        "f_score": _ratio(2 * tp, 2 * tp + fp + fn),
        "mcc": (tp * tn - fp * fn) / math.sqrt(den) if den else 0.0,
    }


def multiclass_accuracy(cm) -> float:
    cm = np.asarray(cm)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ValueError("confusion matrix must be square")
    total = cm.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    return float(np.trace(cm) / total)


@dataclass
class Curve:
    x: np.ndarray
    y: np.ndarray
    thresholds: np.ndarray
    auc: float


def _check_binary(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    if labels.all() or not labels.any():
        raise ValueError("need at least one positive and one negative label")
    return scores, labels


def _cumulative_counts(scores, labels):
    order = np.argsort(-scores, kind="mergesort")
    s, l = scores[order], labels[order]
    last = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    tps = np.cumsum(l)[last]
    fps = np.cumsum(~l)[last]
    return tps, fps, s[last]


def roc_curve(scores, labels) -> Curve:
    """ROC points for thresholds at each distinct score, descending; tied scores share a point."""
    scores, labels = _check_binary(scores, labels)
    tps, fps, thr = _cumulative_counts(scores, labels)
    tpr = np.r_[0.0, tps / labels.sum()]
    fpr = np.r_[0.0, fps / (~labels).sum()]
    return Curve(fpr, tpr, np.r_[np.inf, thr], float(np.trapezoid(tpr, fpr)))


def pr_curve(scores, labels) -> Curve:
    """Precision-recall points, anchored at (recall 0, precision 1); AUC by trapezoid."""
    scores, labels = _check_binary(scores, labels)
    tps, fps, thr = _cumulative_counts(scores, labels)
    recall = np.r_[0.0, tps / labels.sum()]
    precision = np.r_[1.0, tps / (tps + fps)]
    return Curve(recall, precision, np.r_[np.inf, thr], float(np.trapezoid(precision, recall)))


def mann_whitney_auc(scores, labels) -> float:
    """Probability a positive outscores a negative, ties counted as one half (O(n^2))."""
    scores, labels = _check_binary(scores, labels)
    pos, neg = scores[labels], scores[~labels]
    diff = pos[:, None] - neg[None, :]
    return float(((diff > 0).sum() + 0.5 * (diff == 0).sum()) / diff.size)


# --------------------------------------------------------------------------
# trust
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TrustRecord:
    confidence: float
    correct: bool
    predicted: int = 0
    actual: int = 0

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")


@dataclass(frozen=True)
class TrustConfig:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 0.5
    grid_points: int = 201
    normalized: bool = False

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) <= 0:
            raise ValueError("alpha, beta and gamma must be positive")
        if self.grid_points < 2:
            raise ValueError("grid needs at least two points")


def qa_trust(rec: TrustRecord, cfg: TrustConfig = TrustConfig()) -> float:
    """Reward ``C**alpha`` for a correct answer, ``(1 - C)**beta`` for a wrong one."""
    if rec.correct:
        return rec.confidence ** cfg.alpha
    return (1.0 - rec.confidence) ** cfg.beta


def trust_grid(cfg: TrustConfig = TrustConfig()) -> np.ndarray:
    return np.linspace(0.0, 1.0, cfg.grid_points)


def trust_density(trusts, cfg: TrustConfig = TrustConfig(), grid=None) -> np.ndarray:
    """Gaussian-kernel trust density on ``grid`` (default: ``cfg.grid_points`` over [0, 1]).

    The kernel width is ``gamma / sqrt(n)`` while the prefactor stays
    ``1 / (gamma * sqrt(2 pi))``, so the curve does not integrate to one.
    ``cfg.normalized`` switches to the matching ``1 / (width * sqrt(2 pi))``.
    """
    q = np.asarray(trusts, dtype=np.float64).ravel()
    n = q.size
    if n == 0:
        raise ValueError("trust list is empty")
    x = trust_grid(cfg) if grid is None else np.asarray(grid, dtype=np.float64)
    width = cfg.gamma / math.sqrt(n)
    scale = width if cfg.normalized else cfg.gamma
    k = np.exp(-((q[None, :] - x[:, None]) ** 2) / (2.0 * width * width))
    return k.sum(axis=1) / (n * scale * math.sqrt(2.0 * math.pi))


def trust_spectrum(trusts_by_class: dict) -> dict:
    """Mean question-answer trust per class."""
    out = {}
    for cls, values in trusts_by_class.items():
        values = np.asarray(values, dtype=np.float64)
        if values.size == 0:
            raise ValueError(f"class {cls} has no trust values")
        out[cls] = float(values.mean())
    return out


def net_trust_score(spectra) -> float:
    """Unweighted mean of per-class trust spectra."""
    values = list(spectra.values()) if isinstance(spectra, dict) else list(spectra)
    if not values:
        raise ValueError("no spectra given")
    return float(np.mean(values))
