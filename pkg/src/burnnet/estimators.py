"""scikit-learn estimators around the BurnNet training functions."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import phantom
from .model import (BINARY, MULTICLASS, BurnNetConfig, SourceModel, build_classifier,
                    build_source, decide, train_classifier, train_source,
                    transfer_to_classifier)
from .ndtensor import Rng

__all__ = ["Downsampler", "BurnNetAutoencoder", "BurnNetClassifier"]


def _images(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 3:
        X = X[:, None]
    if X.ndim != 4:
        raise ValueError(f"expected images as (N, rows, cols) or (N, 1, rows, cols), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("images contain non-finite values")
    return X


def _config(est, input_shape) -> BurnNetConfig:
    return BurnNetConfig(input_shape=input_shape,
                         encoder_channels=est.encoder_channels,
                         bottleneck_channels=est.bottleneck_channels,
                         decoder_channels=getattr(est, "decoder_channels", (16, 8, 8, 4)),
                         epochs=est.epochs, source_epochs=est.epochs,
                         batch=est.batch_size, lr=est.learning_rate,
                         seed=est.random_state,
                         freeze_encoder=getattr(est, "freeze_encoder", False))


class Downsampler(TransformerMixin, BaseEstimator):
    """Block-mean downsampling of an image stack ``(N, rows, cols)``."""

    def __init__(self, factor: int = 10):
        self.factor = factor

    def fit(self, X, y=None):
        self.n_features_in_ = 1
        return self

    def transform(self, X):
        return np.stack([phantom.downsample(img, self.factor) for img in np.asarray(X)])


class BurnNetAutoencoder(TransformerMixin, BaseEstimator):
    """Source encoder-decoder mapping burned images onto unburned ones.

    ``fit(X, targets=U)`` trains on burned images ``X`` with unpaired targets
    drawn from ``U`` each epoch; without ``targets`` it is a plain
    autoencoder (each image is its own target).  ``transform`` returns
    reconstructions.
    """

    def __init__(self, encoder_channels=(4, 8, 8, 16), bottleneck_channels=8,
                 decoder_channels=(16, 8, 8, 4), epochs=2000, batch_size=32,
                 learning_rate=0.001, random_state=0):
        self.encoder_channels = encoder_channels
        self.bottleneck_channels = bottleneck_channels
        self.decoder_channels = decoder_channels
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.random_state = random_state

    def fit(self, X, y=None, targets=None):
        X = _images(X)
        cfg = _config(self, X.shape[1:])
        self.model_ = build_source(cfg)
        if targets is None:
            self.loss_curve_ = train_source(self.model_, X, X, cfg, pairing="identity")
        else:
            self.loss_curve_ = train_source(self.model_, _images(targets), X, cfg)
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = _images(X)
        return self.model_.forward(X)[:, 0]

    @property
    def source_model(self) -> SourceModel:
        check_is_fitted(self, "model_")
        return self.model_


class BurnNetClassifier(ClassifierMixin, BaseEstimator):
    """Encoder + global average pooling + dense head.

    Two classes give a single sigmoid output (``classes_[1]`` is the
    positive class); four give a softmax head.  Pass a trained
    :class:`~burnnet.model.SourceModel` as ``pretrained`` to warm-start the
    encoder.
    """

    def __init__(self, encoder_channels=(4, 8, 8, 16), bottleneck_channels=8, epochs=2000,
                 batch_size=32, learning_rate=0.001, augment="random", freeze_encoder=False,
                 pretrained=None, random_state=0):
        self.encoder_channels = encoder_channels
        self.bottleneck_channels = bottleneck_channels
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.augment = augment
        self.freeze_encoder = freeze_encoder
        self.pretrained = pretrained
        self.random_state = random_state

    def fit(self, X, y):
        X = _images(X)
        y = np.asarray(y)
        if len(y) != len(X):
            raise ValueError("X and y have different lengths")
        self.classes_ = np.unique(y)
        if len(self.classes_) == 2:
            mode = BINARY
        elif len(self.classes_) == 4:
            mode = MULTICLASS
        else:
            raise ValueError(f"expected 2 or 4 classes, got {len(self.classes_)}")
        target = np.searchsorted(self.classes_, y)
        if self.pretrained is not None:
            src = self.pretrained
            if src.cfg.input_shape != X.shape[1:]:
                raise ValueError("pretrained model was built for a different input shape")
            cfg = src.cfg
            cfg = BurnNetConfig(**{**cfg.to_dict(), "epochs": self.epochs, "batch": self.batch_size,
                                   "lr": self.learning_rate, "seed": self.random_state,
                                   "freeze_encoder": self.freeze_encoder})
            src = SourceModel(cfg, src.encoder, src.decoder, src.trained_epochs)
            clf = transfer_to_classifier(src, mode)
        else:
            cfg = _config(self, X.shape[1:])
            clf = build_classifier(cfg, mode)
        self.loss_curve_ = train_classifier(clf, X, target, cfg, Rng(cfg.seed, (20,)),
                                            augment=self.augment)
        self.classifier_ = clf
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self

    def decision_function(self, X):
        check_is_fitted(self, "classifier_")
        z = self.classifier_.logits(_images(X))
        return z[:, 0] if self.classifier_.mode == BINARY else z

    def predict_proba(self, X):
        check_is_fitted(self, "classifier_")
        p = self.classifier_.probabilities(_images(X))
        return np.column_stack([1.0 - p, p]) if self.classifier_.mode == BINARY else p

    def predict(self, X):
        p = self.predict_proba(X)
        probs = p[:, 1] if self.classifier_.mode == BINARY else p
        idx, _ = decide(probs, self.classifier_.mode)
        return self.classes_[idx]
