"""Guided backpropagation, Grad-CAM++ and their product for a trained classifier."""
from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .layers import Conv2D, ReLU
from .model import BINARY, TargetClassifier
from .ndtensor import NumericalError, ShapeError

__all__ = [
    "Heatmap", "class_score_gradient", "guided_backprop", "gradcam_pp",
    "guided_gradcam_pp", "class_average_heatmap", "depth_profile",
    "bilinear_resize", "default_target_layer",
]


@dataclass
class Heatmap:
    values: np.ndarray
    normalized: bool = False

    @property
    def shape(self):
        return self.values.shape

    def to_uint8(self) -> np.ndarray:
        v = self.values
        top = v.max() if v.size else 0.0
        scaled = v / top if top > 0 and not self.normalized else v
        return np.round(np.clip(scaled, 0.0, 1.0) * 255.0).astype(np.uint8)


def _check_model(clf: TargetClassifier):
    for name, t in clf.params():
        if not np.all(np.isfinite(t.data)):
            raise NumericalError(f"parameter {name} is not finite")


def _prepare(clf, img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[None]
    if img.shape != clf.cfg.input_shape:
        raise ShapeError(f"expected image of shape {clf.cfg.input_shape}, got {img.shape}")
    return img[None]


def _score_seed(clf: TargetClassifier, cls: int) -> np.ndarray:
    """d(score)/d(logits): binary scores are +logit for DP (1) and -logit for rest (0)."""
    if clf.mode == BINARY:
        if cls not in (0, 1):
            raise ValueError("binary class must be 0 (rest) or 1 (DP)")
        return np.array([[1.0 if cls == 1 else -1.0]])
    if not 0 <= cls < clf.n_outputs:
        raise ValueError(f"class index {cls} out of range")
    seed = np.zeros((1, clf.n_outputs))
    seed[0, cls] = 1.0
    return seed


@contextmanager
def _guided(clf: TargetClassifier):
    relus = [layer for layer in clf.encoder.layers if isinstance(layer, ReLU)]
    try:
        for r in relus:
            r.guided = True
        yield
    finally:
        for r in relus:
            r.guided = False


def class_score_gradient(clf: TargetClassifier, img, cls: int) -> np.ndarray:
    """Plain gradient of the class score w.r.t. the input pixels, ``(rows, cols)``."""
    _check_model(clf)
    x = _prepare(clf, img)
    clf.logits(x)
    return clf.backward(_score_seed(clf, cls))[0, 0]


def guided_backprop(clf: TargetClassifier, img, cls: int) -> Heatmap:
    """|input gradient| with every ReLU passing only positive activations and positive gradients."""
    _check_model(clf)
    x = _prepare(clf, img)
    with _guided(clf):
        clf.logits(x)
        g = clf.backward(_score_seed(clf, cls))
    return Heatmap(np.abs(g[0, 0]))


def default_target_layer(clf: TargetClassifier) -> int:
    """Index of the encoder layer whose output feeds Grad-CAM++: the last conv (after its ReLU)."""
    layers = clf.encoder.layers
    last = max(i for i, layer in enumerate(layers) if isinstance(layer, Conv2D))
    if last + 1 < len(layers) and isinstance(layers[last + 1], ReLU):
        return last + 1
    return last


def bilinear_resize(a: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Bilinear interpolation with corner pixels aligned."""
    a = np.asarray(a, dtype=np.float64)
    h, w = a.shape
    if (h, w) == (rows, cols):
        return a.copy()
    r = np.linspace(0.0, h - 1, rows) if rows > 1 else np.zeros(1)
    c = np.linspace(0.0, w - 1, cols) if cols > 1 else np.zeros(1)
    r0 = np.minimum(np.floor(r).astype(int), h - 1)
    c0 = np.minimum(np.floor(c).astype(int), w - 1)
    r1, c1 = np.minimum(r0 + 1, h - 1), np.minimum(c0 + 1, w - 1)
    fr, fc = (r - r0)[:, None], (c - c0)[None, :]
    top = a[r0][:, c0] * (1 - fc) + a[r0][:, c1] * fc
    bottom = a[r1][:, c0] * (1 - fc) + a[r1][:, c1] * fc
    return top * (1 - fr) + bottom * fr


def gradcam_pp_weights(activations: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """Per-channel Grad-CAM++ weights from ``(K, H, W)`` activations and score gradients.

    Uses the exponential-score closed form: higher derivatives of ``exp(score)``
    are powers of the first, so ``alpha = g^2 / (2 g^2 + sum(A) g^3)``.
    """
    g2, g3 = grads ** 2, grads ** 3
    denom = 2.0 * g2 + activations.sum(axis=(1, 2), keepdims=True) * g3
    alpha = g2 / (denom + 1e-12)
    return (alpha * np.maximum(grads, 0.0)).sum(axis=(1, 2))


def gradcam_pp(clf: TargetClassifier, img, cls: int, layer: int | None = None,
               upsample: bool = True) -> Heatmap:
    _check_model(clf)
    x = _prepare(clf, img)
    layer = default_target_layer(clf) if layer is None else layer
    clf.logits(x)
    A = clf.encoder.outputs[layer][0]
    if A.ndim != 3 or A.shape[1] == 0 or A.shape[2] == 0:
        raise ShapeError(f"layer {layer} has no spatial extent")
    d_enc = clf.head.backward(_score_seed(clf, cls))
    grads = clf.encoder.backward(d_enc, stop=layer + 1)[0]
    w = gradcam_pp_weights(A, grads)
    cam = np.maximum(np.tensordot(w, A, axes=1), 0.0)
    if upsample:
        cam = np.maximum(bilinear_resize(cam, x.shape[2], x.shape[3]), 0.0)
    return Heatmap(cam)


def guided_gradcam_pp(clf: TargetClassifier, img, cls: int, layer: int | None = None) -> Heatmap:
    gb = guided_backprop(clf, img, cls)
    cam = gradcam_pp(clf, img, cls, layer)
    return Heatmap(gb.values * cam.values)


def class_average_heatmap(maps) -> Heatmap:
    """Pixelwise mean, then min-max scaling to [0, 1]; a flat mean maps to all zeros."""
    arrays = [m.values if isinstance(m, Heatmap) else np.asarray(m, dtype=np.float64) for m in maps]
    if not arrays:
        raise ValueError("no heatmaps to average")
    if len({a.shape for a in arrays}) > 1:
        raise ShapeError("heatmaps have mixed dimensions")
    mean = np.mean(arrays, axis=0)
    lo, hi = mean.min(), mean.max()
    if hi <= lo:
        return Heatmap(np.zeros_like(mean), normalized=True)
    return Heatmap((mean - lo) / (hi - lo), normalized=True)


def depth_profile(hm) -> np.ndarray:
    """``(rows, 2)`` array of per-row mean and population std across the lateral axis."""
    v = hm.values if isinstance(hm, Heatmap) else np.asarray(hm, dtype=np.float64)
    return np.column_stack([v.mean(axis=1), v.std(axis=1)])
