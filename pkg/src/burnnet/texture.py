"""Grey-level co-occurrence texture features and the two engineered-feature baselines.

``GlcmFeatures`` turns full-resolution images into 19 Haralick-style
features; ``FisherLDA`` and ``SmoSVC`` are binary classifiers over those
features.  All three follow the scikit-learn estimator protocol.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .ndtensor import NumericalError

__all__ = [
    "FEATURE_NAMES", "DEFAULT_OFFSETS", "Glcm", "compute_glcm", "haralick_features",
    "GlcmFeatures", "FisherLDA", "SmoSVC", "lda_fit", "lda_predict",
    "svm_rbf_fit", "svm_predict", "ConvergenceError",
]

DEFAULT_OFFSETS = ((0, 1), (1, 0), (1, 1), (1, -1))

FEATURE_NAMES = (
    "angular_second_moment", "contrast", "correlation", "sum_of_squares_variance",
    "inverse_difference_moment", "sum_average", "sum_variance", "sum_entropy",
    "entropy", "difference_variance", "difference_entropy",
    "information_measure_correlation_1", "information_measure_correlation_2",
    "autocorrelation", "dissimilarity", "cluster_shade", "cluster_prominence",
    "maximum_probability", "inverse_difference",
)


class ConvergenceError(RuntimeError):
    pass


@dataclass
class Glcm:
    levels: int
    matrix: np.ndarray
    offsets: tuple


def compute_glcm(img, levels: int = 32, offsets=DEFAULT_OFFSETS) -> Glcm:
    """Symmetric, normalized co-occurrence matrix summed over ``offsets``.

    Pixels in [0, 1] are quantized to ``min(floor(p * levels), levels - 1)``;
    each ``(drow, dcol)`` offset is counted together with its reverse.
    """
    if levels < 2:
        raise ValueError("levels must be >= 2")
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("compute_glcm expects a 2-D image")
    q = np.minimum(np.floor(np.clip(img, 0.0, 1.0) * levels), levels - 1).astype(np.int64)
    rows, cols = q.shape
    counts = np.zeros(levels * levels)
    for dr, dc in offsets:
        if abs(dr) >= rows or abs(dc) >= cols:
            raise ValueError(f"image {rows}x{cols} is smaller than offset ({dr}, {dc})")
        a = q[max(0, -dr):rows - max(0, dr), max(0, -dc):cols - max(0, dc)]
        b = q[max(0, dr):max(0, dr) + a.shape[0], max(0, dc):max(0, dc) + a.shape[1]]
        counts += np.bincount((a * levels + b).ravel(), minlength=levels * levels)
    m = counts.reshape(levels, levels)
    m = m + m.T
    return Glcm(levels, m / m.sum(), tuple(tuple(o) for o in offsets))


def _entropy(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def haralick_features(g: Glcm | np.ndarray) -> np.ndarray:
    """The 19 features of :data:`FEATURE_NAMES`, natural logs, grey levels numbered from 1."""
    p = g.matrix if isinstance(g, Glcm) else np.asarray(g, dtype=np.float64)
    L = p.shape[0]
    lv = np.arange(1, L + 1, dtype=np.float64)
    i, j = np.meshgrid(lv, lv, indexing="ij")
    px, py = p.sum(axis=1), p.sum(axis=0)
    mux, muy = (lv * px).sum(), (lv * py).sum()
    varx, vary = (((lv - mux) ** 2) * px).sum(), (((lv - muy) ** 2) * py).sum()

    # p_{x+y}(k) for k = 2..2L and p_{x-y}(k) for k = 0..L-1
    p_sum = np.bincount((i + j - 2).astype(np.int64).ravel(), p.ravel(), minlength=2 * L - 1)
    k_sum = np.arange(2, 2 * L + 1, dtype=np.float64)
    p_diff = np.bincount(np.abs(i - j).astype(np.int64).ravel(), p.ravel(), minlength=L)
    k_diff = np.arange(L, dtype=np.float64)

    asm = (p * p).sum()
    contrast = (k_diff ** 2 * p_diff).sum()
    autocorr = (i * j * p).sum()
    sd = np.sqrt(varx * vary)
    correlation = (autocorr - mux * muy) / sd if sd > 0 else 0.0
    ss_variance = (((i - mux) ** 2) * p).sum()
    idm = (p / (1.0 + (i - j) ** 2)).sum()
    sum_avg = (k_sum * p_sum).sum()
    sum_var = (((k_sum - sum_avg) ** 2) * p_sum).sum()
    sum_ent = _entropy(p_sum)
    ent = _entropy(p)
    diff_mean = (k_diff * p_diff).sum()
    diff_var = (((k_diff - diff_mean) ** 2) * p_diff).sum()
    diff_ent = _entropy(p_diff)
    hx, hy = _entropy(px), _entropy(py)
    pxpy = np.outer(px, py)
    mask = pxpy > 0
    hxy1 = float(-(p[mask] * np.log(pxpy[mask])).sum())
    hxy2 = _entropy(pxpy)
    denom = max(hx, hy)
    imc1 = (ent - hxy1) / denom if denom > 0 else 0.0
    imc2 = np.sqrt(max(0.0, 1.0 - np.exp(-2.0 * (hxy2 - ent))))
    dissim = (np.abs(i - j) * p).sum()
    centred = i + j - mux - muy
    shade = (centred ** 3 * p).sum()
    prominence = (centred ** 4 * p).sum()
    inv_diff = (p / (1.0 + np.abs(i - j))).sum()
    return np.array([asm, contrast, correlation, ss_variance, idm, sum_avg, sum_var,
                     sum_ent, ent, diff_var, diff_ent, imc1, imc2, autocorr, dissim,
                     shade, prominence, p.max(), inv_diff], dtype=np.float64)


class GlcmFeatures(TransformerMixin, BaseEstimator):
    """Map a stack of images ``(N, rows, cols)`` to ``(N, 19)`` texture features."""

    def __init__(self, levels: int = 32, offsets=DEFAULT_OFFSETS):
        self.levels = levels
        self.offsets = offsets

    def fit(self, X, y=None):
        X = np.asarray(X)
        if X.ndim != 3:
            raise ValueError("expected images stacked as (N, rows, cols)")
        self.n_features_in_ = 1
        self.image_shape_ = X.shape[1:]
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            X = X[None]
        return np.stack([haralick_features(compute_glcm(img, self.levels, self.offsets))
                         for img in X])

    def get_feature_names_out(self, input_features=None):
        return np.array(FEATURE_NAMES, dtype=object)


def _binary_targets(y):
    classes = np.unique(y)
    if len(classes) != 2:
        raise ValueError(f"binary classifier needs exactly two classes, got {len(classes)}")
    return classes, np.where(y == classes[1], 1.0, -1.0)


class FisherLDA(ClassifierMixin, BaseEstimator):
    """Two-class Fisher discriminant on standardized features.

    ``w = (S_w + eps I)^-1 (mu_pos - mu_neg)`` with
    ``eps = ridge * trace(S_w) / n_features``; the threshold is the midpoint
    of the projected class means.  ``decision_function`` is positive for
    ``classes_[1]``.
    """

    def __init__(self, ridge: float = 1e-6):
        self.ridge = ridge

    def fit(self, X, y, feature_names=None):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, s = _binary_targets(y)
        for c in (1.0, -1.0):
            if (s == c).sum() < 2:
                raise ValueError("each class needs at least two samples")
        self.mean_ = X.mean(axis=0)
        self.scale_ = X.std(axis=0)
        const = np.flatnonzero(self.scale_ == 0)
        if len(const):
            names = feature_names if feature_names is not None else (
                FEATURE_NAMES if X.shape[1] == len(FEATURE_NAMES) else None)
            labels = [names[k] if names is not None else f"x{k}" for k in const]
            raise np.linalg.LinAlgError(
                "within-class scatter is singular; constant features: " + ", ".join(labels))
        Z = (X - self.mean_) / self.scale_
        mu_pos, mu_neg = Z[s > 0].mean(axis=0), Z[s < 0].mean(axis=0)
        D = np.concatenate([Z[s > 0] - mu_pos, Z[s < 0] - mu_neg])
        sw = D.T @ D
        eps = self.ridge * np.trace(sw) / X.shape[1]
        if not eps > 0:
            raise np.linalg.LinAlgError("within-class scatter is zero")
        self.coef_ = np.linalg.solve(sw + eps * np.eye(X.shape[1]), mu_pos - mu_neg)
        self.threshold_ = 0.5 * (mu_pos + mu_neg) @ self.coef_
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        return ((X - self.mean_) / self.scale_) @ self.coef_ - self.threshold_

    def predict(self, X):
        return self.classes_[(self.decision_function(X) > 0).astype(int)]


def lda_fit(X, y) -> FisherLDA:
    return FisherLDA().fit(X, y)


def lda_predict(model: FisherLDA, x) -> float:
    """Signed score of a single feature vector; positive means ``classes_[1]``."""
    return float(model.decision_function(np.atleast_2d(x))[0])


def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


class SmoSVC(ClassifierMixin, BaseEstimator):
    """Binary soft-margin SVM with an RBF kernel, trained by SMO.

    Each iteration updates the maximal-violating pair of dual variables
    (first-order working-set selection) and stops once the KKT violation
    ``max_{I_up} -y*G - min_{I_low} -y*G`` falls to ``tol``.

    Parameters
    ----------
    C : float
        Box constraint on the dual coefficients.
    gamma : float or "auto"
        RBF width; ``"auto"`` means ``1 / n_features``.
    tol : float
        KKT tolerance.
    max_passes : int
        Iteration budget in units of ``n_samples`` pair updates.
    """

    def __init__(self, C: float = 1.0, gamma="auto", tol: float = 1e-3, max_passes: int = 10_000):
        self.C = C
        self.gamma = gamma
        self.tol = tol
        self.max_passes = max_passes

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        if self.C <= 0:
            raise ValueError("C must be positive")
        self.classes_, s = _binary_targets(y)
        n, d = X.shape
        gamma = 1.0 / d if self.gamma == "auto" else float(self.gamma)
        if gamma <= 0:
            raise ValueError("gamma must be positive")
        K = rbf_kernel(X, X, gamma)
        Q = (s[:, None] * s[None, :]) * K
        C = float(self.C)
        alpha = np.zeros(n)
        G = -np.ones(n)
        budget = self.max_passes * max(n, 1)
        gap = np.inf
        for it in range(budget):
            up = ((s > 0) & (alpha < C)) | ((s < 0) & (alpha > 0))
            low = ((s > 0) & (alpha > 0)) | ((s < 0) & (alpha < C))
            score = -s * G
            i = np.flatnonzero(up)[np.argmax(score[up])]
            j = np.flatnonzero(low)[np.argmin(score[low])]
            gap = score[i] - score[j]
            if gap <= self.tol:
                break
            self._update_pair(i, j, s, Q, G, alpha, C)
        else:
            raise ConvergenceError(f"SMO did not converge in {budget} iterations; "
                                   f"KKT residual {gap:.3g} > tol {self.tol}")
        self.n_iter_ = it
        self.kkt_residual_ = float(gap)
        free = (alpha > 0) & (alpha < C)
        score = -s * G
        if free.any():
            b = score[free].mean()
        else:
            up = ((s > 0) & (alpha < C)) | ((s < 0) & (alpha > 0))
            low = ((s > 0) & (alpha > 0)) | ((s < 0) & (alpha < C))
            b = 0.5 * (score[up].max() + score[low].min())
        sv = alpha > 0
        self.alpha_ = alpha
        self.support_ = np.flatnonzero(sv)
        self.support_vectors_ = X[sv]
        self.dual_coef_ = (alpha * s)[sv]
        self.intercept_ = float(b)
        self.gamma_ = gamma
        self.dual_objective_ = float(alpha.sum() - 0.5 * alpha @ Q @ alpha)
        self.n_features_in_ = d
        return self

    @staticmethod
    def _update_pair(i, j, s, Q, G, alpha, C):
        # two-variable subproblem along the feasible direction (s_i e_i - s_j e_j)
        a_i, a_j = alpha[i], alpha[j]
        quad = Q[i, i] + Q[j, j] - 2.0 * s[i] * s[j] * Q[i, j]
        quad = max(quad, 1e-12)
        step = (-s[i] * G[i] + s[j] * G[j]) / quad
        # bounds on step so both variables stay in [0, C]
        lo_i, hi_i = (-a_i, C - a_i) if s[i] > 0 else (a_i - C, a_i)
        lo_j, hi_j = (a_j - C, a_j) if s[j] > 0 else (-a_j, C - a_j)
        step = min(max(step, max(lo_i, lo_j)), min(hi_i, hi_j))
        d_i, d_j = s[i] * step, -s[j] * step
        alpha[i] = min(max(a_i + d_i, 0.0), C)
        alpha[j] = min(max(a_j + d_j, 0.0), C)
        G += Q[:, i] * (alpha[i] - a_i) + Q[:, j] * (alpha[j] - a_j)

    def decision_function(self, X):
        check_is_fitted(self, "dual_coef_")
        X = check_array(X, dtype=np.float64)
        return rbf_kernel(X, self.support_vectors_, self.gamma_) @ self.dual_coef_ + self.intercept_

    def predict(self, X):
        return self.classes_[(self.decision_function(X) > 0).astype(int)]


def svm_rbf_fit(X, y, C: float = 1.0, gamma="auto") -> SmoSVC:
    return SmoSVC(C=C, gamma=gamma).fit(X, y)


def svm_predict(model: SmoSVC, x) -> float:
    return float(model.decision_function(np.atleast_2d(x))[0])


def check_finite_features(F: np.ndarray) -> None:
    if not np.all(np.isfinite(F)):
        raise NumericalError("non-finite texture feature")
