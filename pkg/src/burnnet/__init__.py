"""Two-stage texture classifier for B-mode ultrasound burn images, with baselines,
trust metrics and saliency maps."""
from ._version import __version__
from .estimators import BurnNetAutoencoder, BurnNetClassifier, Downsampler
from .metrics import (ConfusionMatrix, TrustConfig, TrustRecord, classification_metrics,
                      net_trust_score, pr_curve, qa_trust, roc_curve, trust_density,
                      trust_spectrum)
from .model import (BINARY, MULTICLASS, BurnClass, BurnNetConfig, build_classifier,
                    build_source, predict, train_classifier, train_source,
                    transfer_to_classifier)
from .phantom import PhantomParams, downsample, generate_dataset, kfold_split
from .texture import FisherLDA, GlcmFeatures, SmoSVC

__all__ = [
    "__version__", "BurnNetAutoencoder", "BurnNetClassifier", "Downsampler",
    "ConfusionMatrix", "TrustConfig", "TrustRecord", "classification_metrics",
    "net_trust_score", "pr_curve", "qa_trust", "roc_curve", "trust_density", "trust_spectrum",
    "BINARY", "MULTICLASS", "BurnClass", "BurnNetConfig", "build_classifier", "build_source",
    "predict", "train_classifier", "train_source", "transfer_to_classifier",
    "PhantomParams", "downsample", "generate_dataset", "kfold_split",
    "FisherLDA", "GlcmFeatures", "SmoSVC",
]
