"""Source encoder-decoder, encoder-as-classifier transfer, and both training stages."""
from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field, asdict
from enum import IntEnum

import numpy as np

from .layers import (Adam, AvgPool2D, CenterCrop, Conv2D, Deconv2D, Dense,
                     GlobalAvgPool, ReLU, Sequential, Sigmoid, bce_with_logits,
                     reconstruction_loss, reconstruction_loss_grad, sigmoid,
                     softmax, softmax_cross_entropy)
from .ndtensor import NumericalError, Rng, ShapeError

log = logging.getLogger(__name__)

__all__ = [
    "BurnClass", "BurnNetConfig", "SourceModel", "TargetClassifier",
    "build_encoder", "build_source", "train_source", "transfer_to_classifier",
    "build_classifier", "train_classifier", "predict", "predict_batch",
    "BINARY", "MULTICLASS",
]

BINARY = "binary"
MULTICLASS = "multiclass"


class BurnClass(IntEnum):
    UNBURNED = 0
    SP = 1
    DP = 2
    LFT = 3
    DFT = 4

    @property
    def label(self) -> str:
        return "Unburned" if self is BurnClass.UNBURNED else self.name

    @classmethod
    def parse(cls, text: str) -> BurnClass:
        key = str(text).strip().upper()
        for member in cls:
            if key in (member.name, member.label.upper()):
                return member
        raise ValueError(f"unknown burn class {text!r}")


BURN_DEPTHS = (BurnClass.SP, BurnClass.DP, BurnClass.LFT, BurnClass.DFT)


@dataclass
class BurnNetConfig:
    """Architecture and training knobs.

    ``input_shape`` is ``(channels, depth rows, lateral cols)``.  The default
    widths are the narrow variant used for desk-scale runs; the wide
    ``(16, 32, 64, 128) / 64`` variant is available through
    :meth:`wide`.
    """

    input_shape: tuple[int, int, int] = (1, 22, 34)
    encoder_channels: tuple[int, ...] = (4, 8, 8, 16)
    bottleneck_channels: int = 8
    decoder_channels: tuple[int, ...] = (16, 8, 8, 4)
    epochs: int = 2000
    source_epochs: int = 2000
    batch: int = 32
    lr: float = 0.001
    seed: int = 0
    freeze_encoder: bool = False

    def __post_init__(self):
        self.input_shape = tuple(int(v) for v in self.input_shape)
        self.encoder_channels = tuple(int(v) for v in self.encoder_channels)
        self.decoder_channels = tuple(int(v) for v in self.decoder_channels)
        if len(self.encoder_channels) != 4 or len(self.decoder_channels) != 4:
            raise ValueError("BurnNet uses four encoding and four decoding blocks")
        if self.epochs <= 0 or self.source_epochs <= 0 or self.batch <= 0:
            raise ValueError("epochs and batch must be positive")

    @classmethod
    def wide(cls, **kw) -> BurnNetConfig:
        return cls(encoder_channels=(16, 32, 64, 128), bottleneck_channels=64,
                   decoder_channels=(128, 64, 32, 16), **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d


def build_encoder(cfg: BurnNetConfig, rng: Rng) -> Sequential:
    c, h, w = cfg.input_shape
    if h < 10 or w < 10:
        raise ShapeError(f"input {h}x{w} is too small for four encoding blocks (need >= 10x10)")
    layers = []
    prev = c
    for i, ch in enumerate(cfg.encoder_channels):
        layers += [Conv2D(prev, ch, 2, 1, rng=rng.child(1, i)), ReLU(), AvgPool2D(2, 1)]
        prev = ch
    layers += [Conv2D(prev, cfg.bottleneck_channels, 1, 1, rng=rng.child(1, 99)), ReLU()]
    return Sequential(layers)


def build_decoder(cfg: BurnNetConfig, rng: Rng) -> Sequential:
    c, h, w = cfg.input_shape
    layers = []
    prev = cfg.bottleneck_channels
    for i, ch in enumerate(cfg.decoder_channels):
        layers += [Deconv2D(prev, ch, 2, 2, rng=rng.child(2, i)), ReLU(),
                   Conv2D(ch, ch, 2, 2, rng=rng.child(3, i)), ReLU()]
        prev = ch
    layers += [Deconv2D(prev, prev, 2, 2, rng=rng.child(2, 99)), ReLU(),
               CenterCrop(h, w),
               Conv2D(prev, c, 1, 1, rng=rng.child(3, 99)), Sigmoid()]
    return Sequential(layers)


@dataclass
class SourceModel:
    """Encoder ``f`` and decoder ``g``; ``g(f(x))`` has the input's shape."""

    cfg: BurnNetConfig
    encoder: Sequential
    decoder: Sequential
    trained_epochs: int = 0

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.decoder.forward(self.encoder.forward(x))

    def backward(self, dz: np.ndarray) -> np.ndarray:
        return self.encoder.backward(self.decoder.backward(dz))

    def params(self):
        return ([(f"encoder.{n}", t) for n, t in self.encoder.params()]
                + [(f"decoder.{n}", t) for n, t in self.decoder.params()])

    def n_params(self) -> int:
        return sum(t.size for _, t in self.params())


def build_source(cfg: BurnNetConfig) -> SourceModel:
    rng = Rng(cfg.seed, (0,))
    model = SourceModel(cfg, build_encoder(cfg, rng), build_decoder(cfg, rng))
    out = model.decoder.output_shape(model.encoder.output_shape(cfg.input_shape))
    if out != cfg.input_shape:
        raise ShapeError(f"decoder output {out} != input {cfg.input_shape}")
    return model


@dataclass
class TargetClassifier:
    """Encoder followed by global average pooling and a dense head producing logits."""

    cfg: BurnNetConfig
    encoder: Sequential
    head: Sequential
    mode: str = BINARY
    frozen: bool = False
    history: dict = field(default_factory=dict)

    @property
    def n_outputs(self) -> int:
        return 1 if self.mode == BINARY else len(BURN_DEPTHS)

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self.head.forward(self.encoder.forward(x))

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        return self.encoder.backward(self.head.backward(dlogits))

    def probabilities(self, x: np.ndarray) -> np.ndarray:
        """``(N,)`` positive-class probability (binary) or ``(N, 4)`` softmax."""
        z = self.logits(x)
        return sigmoid(z[:, 0]) if self.mode == BINARY else softmax(z, axis=1)

    def params(self):
        return ([(f"encoder.{n}", t) for n, t in self.encoder.params()]
                + [(f"head.{n}", t) for n, t in self.head.params()])

    def trainable(self):
        if self.frozen:
            return [t for _, t in self.head.params()]
        return [t for _, t in self.params()]


def _head(cfg: BurnNetConfig, mode: str, rng: Rng) -> Sequential:
    n_out = 1 if mode == BINARY else len(BURN_DEPTHS)
    return Sequential([GlobalAvgPool(), Dense(cfg.bottleneck_channels, n_out, rng=rng.child(4))])


def transfer_to_classifier(source: SourceModel, mode: str = BINARY,
                           frozen: bool | None = None) -> TargetClassifier:
    """Drop the decoder, copy the encoder and attach a fresh head; the encoder stays trainable."""
    if mode not in (BINARY, MULTICLASS):
        raise ValueError(f"mode must be {BINARY!r} or {MULTICLASS!r}")
    cfg = source.cfg
    frozen = cfg.freeze_encoder if frozen is None else frozen
    return TargetClassifier(cfg, copy.deepcopy(source.encoder),
                            _head(cfg, mode, Rng(cfg.seed, (5,))), mode, frozen)


def build_classifier(cfg: BurnNetConfig, mode: str = BINARY) -> TargetClassifier:
    """Cold-start classifier: freshly initialized encoder, no pre-training."""
    return transfer_to_classifier(SourceModel(cfg, build_encoder(cfg, Rng(cfg.seed, (0,))),
                                              Sequential([])), mode)


def _check_images(x: np.ndarray, cfg: BurnNetConfig, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3 and cfg.input_shape[0] == 1:
        x = x[:, None]
    if x.ndim != 4 or x.shape[1:] != cfg.input_shape:
        raise ShapeError(f"{what}: expected images of shape {cfg.input_shape}, got {x.shape[1:]}")
    if len(x) == 0:
        raise ValueError(f"{what} is empty")
    return x


def _batches(order: np.ndarray, size: int):
    for start in range(0, len(order), size):
        yield order[start:start + size]


def train_source(model: SourceModel, unburned, burned, cfg: BurnNetConfig | None = None,
                 rng: Rng | None = None, epochs: int | None = None,
                 pairing: str = "random") -> list[float]:
    """Fit ``g(f(burned)) ~ unburned`` with unpaired targets; returns per-epoch mean loss.

    With ``pairing="random"`` every epoch each burned image gets a uniformly
    drawn unburned target.  ``pairing="identity"`` pairs item ``i`` with
    target ``i`` (sets must be the same length).
    """
    if pairing not in ("random", "identity"):
        raise ValueError(f"unknown pairing {pairing!r}")
    cfg = cfg or model.cfg
    rng = rng or Rng(cfg.seed, (10,))
    epochs = cfg.source_epochs if epochs is None else epochs
    unburned = _check_images(unburned, cfg, "unburned set")
    burned = _check_images(burned, cfg, "burned set")
    if pairing == "identity" and len(burned) != len(unburned):
        raise ValueError("identity pairing needs equally sized sets")
    params = [t for _, t in model.params()]
    opt = Adam(params, lr=cfg.lr)
    trace = []
    for epoch in range(epochs):
        er = rng.child(epoch)
        if pairing == "random":
            targets = er.integers(0, len(unburned), size=len(burned))
        else:
            targets = np.arange(len(burned))
        order = er.permutation(len(burned))
        total = 0.0
        for idx in _batches(order, cfg.batch):
            xb, tb = burned[idx], unburned[targets[idx]]
            opt.zero_grad()
            z = model.forward(xb)
            total += reconstruction_loss(tb, z)
            model.backward(reconstruction_loss_grad(tb, z) / len(idx))
            opt.step()
        loss = total / len(burned)
        if not np.isfinite(loss):
            raise NumericalError(f"source training diverged at epoch {epoch + 1}")
        trace.append(loss)
        if epoch % 50 == 0:
            log.debug("source epoch %d loss %.6f", epoch + 1, loss)
    model.trained_epochs += epochs
    return trace


def _encode_targets(y, mode):
    y = np.asarray(y, dtype=np.int64)
    if mode == BINARY:
        if np.any((y != 0) & (y != 1)):
            raise ValueError("binary targets must be 0 (rest) or 1 (DP)")
        if len(np.unique(y)) < 2:
            raise ValueError("binary training needs both classes present")
    elif np.any((y < 0) | (y >= len(BURN_DEPTHS))):
        raise ValueError("multiclass targets must be indices 0..3 (SP, DP, LFT, DFT)")
    return y


def train_classifier(clf: TargetClassifier, X, y, cfg: BurnNetConfig | None = None,
                     rng: Rng | None = None, augment: str | bool | None = "random",
                     epochs: int | None = None) -> list[float]:
    """Minibatch Adam on cross-entropy; ``y`` is 0/1 (binary) or 0..3 (multiclass).

    ``augment="random"`` flips each training image laterally with probability
    1/2 every epoch; ``"double"`` trains on the images plus all their flips;
    ``None`` disables augmentation.
    """
    cfg = cfg or clf.cfg
    rng = rng or Rng(cfg.seed, (20,))
    epochs = cfg.epochs if epochs is None else epochs
    X = _check_images(X, cfg, "training set")
    y = _encode_targets(y, clf.mode)
    if len(y) != len(X):
        raise ShapeError("one label per image required")
    if augment == "double":
        X = np.concatenate([X, X[..., ::-1]])
        y = np.concatenate([y, y])
    elif augment not in (None, False, "random", True):
        raise ValueError(f"unknown augmentation {augment!r}")
    flip = augment in ("random", True)
    opt = Adam(clf.trainable(), lr=cfg.lr)
    trace = []
    for epoch in range(epochs):
        er = rng.child(epoch)
        order = er.permutation(len(X))
        Xe = X
        if flip:
            mask = er.uniform(size=len(X)) < 0.5
            Xe = np.where(mask[:, None, None, None], X[..., ::-1], X)
        total = 0.0
        for idx in _batches(order, cfg.batch):
            for _, t in clf.params():
                t.zero_grad()
            z = clf.logits(Xe[idx])
            if clf.mode == BINARY:
                loss, dz = bce_with_logits(y[idx].astype(np.float64), z[:, 0])
                dz = dz[:, None]
            else:
                loss, dz = softmax_cross_entropy(y[idx], z)
            total += loss * len(idx)
            if clf.frozen:
                clf.head.backward(dz)
            else:
                clf.backward(dz)
            opt.step()
        loss = total / len(X)
        if not np.isfinite(loss):
            raise NumericalError(f"classifier training diverged at epoch {epoch + 1}")
        trace.append(loss)
    return trace


def predict_batch(clf: TargetClassifier, X, chunk: int = 256) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(class index, confidence, probabilities)`` for a stack of images.

    Binary: index 1 means DP, chosen when ``p >= 0.5``; confidence is
    ``max(p, 1 - p)``.  Multiclass: argmax with ties to the lowest index.
    """
    X = _check_images(X, clf.cfg, "input")
    probs = np.concatenate([clf.probabilities(X[i:i + chunk]) for i in range(0, len(X), chunk)])
    return decide(probs, clf.mode) + (probs,)


def decide(probs: np.ndarray, mode: str) -> tuple[np.ndarray, np.ndarray]:
    probs = np.asarray(probs, dtype=np.float64)
    if mode == BINARY:
        cls = (probs >= 0.5).astype(np.int64)
        return cls, np.maximum(probs, 1.0 - probs)
    cls = np.argmax(probs, axis=1)
    return cls, probs[np.arange(len(probs)), cls]


def predict(clf: TargetClassifier, image) -> tuple[str, float]:
    """Classify one image; returns a class name (``"DP"``/``"Rest"`` or a depth) and confidence."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[None]
    if image.shape != clf.cfg.input_shape:
        raise ShapeError(f"expected image of shape {clf.cfg.input_shape}, got {image.shape}")
    cls, conf, _ = predict_batch(clf, image[None])
    return class_name(int(cls[0]), clf.mode), float(conf[0])


def class_name(index: int, mode: str) -> str:
    if mode == BINARY:
        return "DP" if index == 1 else "Rest"
    return BURN_DEPTHS[index].name
