"""Published reference numbers used as ground-truth test vectors.

Confusion rows are ``(tp, fp, fn, tn)`` with DP as the positive class: the
"accept" row holds predicted-DP counts split by the true class.
"""

CONFUSION = {
    "LDA": (36, 23, 44, 217),
    "SVM": (50, 6, 30, 234),
    "VGG16": (49, 4, 31, 236),
    "ResNet50": (35, 7, 45, 233),
    "DenseNet121": (47, 5, 33, 235),
    "BurnNet": (78, 0, 2, 240),
}

# accuracy, sensitivity, specificity, f_score, mcc
METRICS = {
    "LDA": (0.79, 0.45, 0.90, 0.60, 0.40),
    "SVM": (0.88, 0.63, 0.98, 0.76, 0.68),
    "VGG16": (0.89, 0.61, 0.98, 0.75, 0.69),
    "ResNet50": (0.83, 0.44, 0.97, 0.60, 0.52),
    "DenseNet121": (0.88, 0.59, 0.98, 0.73, 0.67),
    "BurnNet": (0.99, 0.98, 1.00, 0.99, 0.98),
}

# rows whose F-score is consistent with their confusion matrix
F_SCORE_ROWS = ("BurnNet", "VGG16")

# (per-class spectra, S_net)
BINARY_TRUST = {
    "VGG16": ((0.70, 0.83), 0.76),
    "ResNet50": ((0.65, 0.74), 0.69),
    "DenseNet121": ((0.73, 0.85), 0.79),
    "BurnNet": ((0.85, 0.95), 0.90),
}

MULTICLASS_TRUST = {
    "VGG16": ((0.49, 0.47, 0.56, 0.48), 0.50),
    "ResNet50": ((0.55, 0.48, 0.56, 0.55), 0.53),
    "DenseNet121": ((0.67, 0.60, 0.69, 0.73), 0.67),
    "BurnNet": ((0.93, 0.92, 0.91, 0.93), 0.92),
}
