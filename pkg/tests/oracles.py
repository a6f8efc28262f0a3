"""Slow, independent reference implementations used as test oracles.

Everything here is written with explicit Python loops and ``math`` so that it
shares no code path with the vectorized package.
"""
import itertools
import math

import numpy as np


def conv2d(x, w, b, stride=1):
    c, h, wd = x.shape
    o, _, k, _ = w.shape
    ho, wo = (h - k) // stride + 1, (wd - k) // stride + 1
    y = np.zeros((o, ho, wo))
    for oc in range(o):
        for i in range(ho):
            for j in range(wo):
                s = b[oc]
                for ic in range(c):
                    for di in range(k):
                        for dj in range(k):
                            s += w[oc, ic, di, dj] * x[ic, i * stride + di, j * stride + dj]
                y[oc, i, j] = s
    return y


def deconv2d(x, w, b):
    """Scatter form of the stride-2, kernel-2 transposed convolution; ``w`` is ``(out, in, 2, 2)``."""
    c, h, wd = x.shape
    o = w.shape[0]
    y = np.zeros((o, 2 * h, 2 * wd))
    for oc in range(o):
        y[oc] += b[oc]
        for ic in range(c):
            for i in range(h):
                for j in range(wd):
                    for di in range(2):
                        for dj in range(2):
                            y[oc, 2 * i + di, 2 * j + dj] += x[ic, i, j] * w[oc, ic, di, dj]
    return y


def avgpool2d(x, k=2, s=1):
    c, h, w = x.shape
    ho, wo = (h - k) // s + 1, (w - k) // s + 1
    y = np.zeros((c, ho, wo))
    for ch in range(c):
        for i in range(ho):
            for j in range(wo):
                y[ch, i, j] = sum(x[ch, i * s + a, j * s + bb] for a in range(k) for bb in range(k)) / (k * k)
    return y


def reconstruction_loss(x, z):
    return sum(abs(a - b) + (a - b) ** 2 for a, b in zip(np.ravel(x), np.ravel(z)))


def metrics(tp, fp, fn, tn):
    n = tp + fp + fn + tn
    den = math.sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn))
    return {
        "accuracy": (tp + tn) / n,
        "sensitivity": tp / (tp + fn),
        "specificity": tn / (tn + fp),
        "f_score": 2 * tp / (2 * tp + fp + fn),
        "mcc": (tp * tn - fp * fn) / den if den else 0.0,
    }


def pairwise_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def trust_density(trusts, x, gamma=0.5):
    n = len(trusts)
    width = gamma / math.sqrt(n)
    total = 0.0
    for q in trusts:
        total += 1.0 / (gamma * math.sqrt(2 * math.pi)) * math.exp(-((q - x) ** 2) / (2 * width ** 2))
    return total / n


def glcm(img, levels, offsets):
    q = [[min(int(p * levels), levels - 1) for p in row] for row in img]
    h, w = len(q), len(q[0])
    m = [[0.0] * levels for _ in range(levels)]
    for dr, dc in offsets:
        for r in range(h):
            for c in range(w):
                r2, c2 = r + dr, c + dc
                if 0 <= r2 < h and 0 <= c2 < w:
                    a, b = q[r][c], q[r2][c2]
                    m[a][b] += 1
                    m[b][a] += 1
    total = sum(map(sum, m))
    return np.array([[v / total for v in row] for row in m])


def haralick_subset(p):
    """ASM, contrast, entropy, correlation and homogeneity (IDM) with 1-based levels."""
    L = len(p)
    asm = sum(p[i][j] ** 2 for i in range(L) for j in range(L))
    contrast = sum((i - j) ** 2 * p[i][j] for i in range(L) for j in range(L))
    entropy = -sum(p[i][j] * math.log(p[i][j]) for i in range(L) for j in range(L) if p[i][j] > 0)
    idm = sum(p[i][j] / (1 + (i - j) ** 2) for i in range(L) for j in range(L))
    px = [sum(p[i][j] for j in range(L)) for i in range(L)]
    mu = sum((i + 1) * px[i] for i in range(L))
    var = sum((i + 1 - mu) ** 2 * px[i] for i in range(L))
    if var == 0:
        corr = 0.0
    else:
        corr = (sum((i + 1) * (j + 1) * p[i][j] for i in range(L) for j in range(L)) - mu * mu) / var
    return {"angular_second_moment": asm, "contrast": contrast, "entropy": entropy,
            "inverse_difference_moment": idm, "correlation": corr}


def svm_dual_bruteforce(K, y, C):
    """Exact soft-margin SVM dual optimum by enumerating every (0, free, C) labelling.

    For each labelling the free coefficients solve the stationarity system of
    the equality-constrained QP; feasible solutions are compared by dual
    objective.  Exponential in ``n``; meant for ``n <= 8``.
    """
    n = len(y)
    Q = (y[:, None] * y[None, :]) * K
    best, best_alpha = -np.inf, None
    for state in itertools.product((0, 1, 2), repeat=n):
        alpha = np.array([C if s == 2 else 0.0 for s in state])
        free = [i for i, s in enumerate(state) if s == 1]
        if free:
            F = np.array(free)
            fixed = np.array([i for i in range(n) if state[i] != 1], dtype=int)
            # [Q_FF  -y_F] [a_F]   [1 - Q_Fx a_x]
            # [y_F^T  0  ] [ b ] = [ -y_x^T a_x ]
            A = np.zeros((len(F) + 1, len(F) + 1))
            A[:-1, :-1] = Q[np.ix_(F, F)]
            A[:-1, -1] = -y[F]
            A[-1, :-1] = y[F]
            rhs = np.zeros(len(F) + 1)
            rhs[:-1] = 1.0 - (Q[np.ix_(F, fixed)] @ alpha[fixed] if len(fixed) else 0.0)
            rhs[-1] = -(y[fixed] @ alpha[fixed]) if len(fixed) else 0.0
            try:
                sol = np.linalg.solve(A, rhs)
            except np.linalg.LinAlgError:
                continue
            alpha[F] = sol[:-1]
            if np.any(alpha[F] < -1e-9) or np.any(alpha[F] > C + 1e-9):
                continue
        if abs(y @ alpha) > 1e-8:
            continue
        obj = alpha.sum() - 0.5 * alpha @ Q @ alpha
        if obj > best + 1e-12:
            best, best_alpha = obj, alpha.copy()
    return best, best_alpha
