import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
import reference
from burnnet.metrics import (METRIC_NAMES, ConfusionMatrix, TrustConfig, TrustRecord,
                             classification_metrics, confusion_from_predictions,
                             mann_whitney_auc, multiclass_accuracy, multiclass_confusion,
                             net_trust_score, pr_curve, qa_trust, roc_curve, trust_density,
                             trust_grid, trust_spectrum)

# ---------------------------------------------------------------- confusion metrics


def test_burnnet_row():
    m = classification_metrics(ConfusionMatrix(tp=78, fp=0, fn=2, tn=240))
    expected = dict(zip(METRIC_NAMES, reference.METRICS["BurnNet"]))
    for k in METRIC_NAMES:
        assert abs(m[k] - expected[k]) <= 0.005 + 1e-9, k


def test_lda_row():
    m = classification_metrics(ConfusionMatrix(tp=36, fp=23, fn=44, tn=217))
    assert round(m["accuracy"], 2) == 0.79
    assert round(m["sensitivity"], 2) == 0.45
    assert round(m["specificity"], 2) == 0.90
    assert round(m["mcc"], 2) == 0.40


def test_all_correct():
    m = classification_metrics(ConfusionMatrix(5, 0, 0, 7))
    assert all(m[k] == 1.0 for k in METRIC_NAMES)
    assert tuple(m) == METRIC_NAMES


@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_metrics_match_oracle(tp, fp, fn, tn):
    if tp + fn == 0 or tn + fp == 0:
        return
    got = classification_metrics(ConfusionMatrix(tp, fp, fn, tn))
    want = oracles.metrics(tp, fp, fn, tn)
    for k in METRIC_NAMES:
        if tp == 0 and fp == 0 and fn == 0 and k == "f_score":
            continue
        assert got[k] == pytest.approx(want[k], abs=1e-12), k
    assert -1.0 <= got["mcc"] <= 1.0


def test_mcc_zero_denominator_and_errors():
    assert classification_metrics(ConfusionMatrix(3, 2, 0, 0))["mcc"] == 0.0
    with pytest.raises(ValueError):
        classification_metrics(ConfusionMatrix(0, 0, 0, 0))
    with pytest.raises(ValueError):
        ConfusionMatrix(-1, 0, 0, 0)


def test_confusion_from_predictions():
    cm = confusion_from_predictions([1, 1, 0, 0, 1], [1, 0, 0, 1, 1])
    assert (cm.tp, cm.fp, cm.fn, cm.tn) == (2, 1, 1, 1)
    np.testing.assert_array_equal(cm.as_array(), [[2, 1], [1, 1]])


def test_multiclass_accuracy_examples():
    assert multiclass_accuracy(np.eye(4) * 7) == 1.0
    assert multiclass_accuracy(np.ones((4, 4)) - np.eye(4) + np.eye(4) * 1) == 0.25
    cm = np.diag([76, 76, 76, 76]) + np.array([[0, 2, 2, 0], [1, 0, 1, 2], [1, 2, 0, 1],
                                               [0, 2, 2, 0]])
    assert cm.sum() == 320 and np.trace(cm) == 304
    assert multiclass_accuracy(cm) == 0.95
    with pytest.raises(ValueError):
        multiclass_accuracy(np.zeros((4, 4)))
    with pytest.raises(ValueError):
        multiclass_accuracy(np.zeros((2, 3)))


def test_multiclass_confusion_counts():
    cm = multiclass_confusion([0, 1, 2, 3, 3], [0, 1, 3, 3, 2], 4)
    assert cm[2, 3] == 1 and cm[3, 2] == 1 and np.trace(cm) == 3


# ---------------------------------------------------------------- curves

def test_roc_examples():
    assert roc_curve([0.9, 0.8, 0.4, 0.2], [1, 1, 0, 0]).auc == 1.0
    assert roc_curve([0.5] * 6, [1, 0, 1, 0, 0, 1]).auc == 0.5
    c = roc_curve([0.9, 0.8, 0.4, 0.2], [0, 0, 1, 1])
    assert c.auc == 0.0
    assert c.x[0] == 0 and c.y[0] == 0 and c.x[-1] == 1 and c.y[-1] == 1


def test_ties_share_a_threshold():
    c = roc_curve([0.7, 0.7, 0.3, 0.7], [1, 0, 0, 1])
    assert len(c.x) == 3
    np.testing.assert_allclose(c.x, [0, 0.5, 1])
    np.testing.assert_allclose(c.y, [0, 1, 1])


def test_pr_curve_anchor_and_perfect():
    c = pr_curve([0.9, 0.8, 0.4, 0.2], [1, 1, 0, 0])
    assert (c.x[0], c.y[0]) == (0.0, 1.0)
    assert c.auc == 1.0
    c = pr_curve([0.1, 0.2, 0.3, 0.9], [1, 1, 0, 0])
    np.testing.assert_allclose(c.y[1:], [0, 0, 1 / 3, 0.5])


def test_curve_errors():
    with pytest.raises(ValueError):
        roc_curve([0.1, 0.2], [1, 1])
    with pytest.raises(ValueError):
        pr_curve([0.1, 0.2], [0, 0])
    with pytest.raises(ValueError):
        roc_curve([0.1, 0.2, 0.3], [0, 1])


@pytest.mark.parametrize("seed", range(100))
def test_auc_matches_pairwise_oracle(seed):
    r = np.random.default_rng(seed)
    labels = r.integers(0, 2, 30)
    labels[:2] = [0, 1]
    scores = np.round(r.uniform(size=30), 1 + seed % 3)  # some runs with ties
    auc = roc_curve(scores, labels).auc
    assert abs(auc - oracles.pairwise_auc(scores.tolist(), labels.tolist())) <= 1e-12
    assert abs(auc - mann_whitney_auc(scores, labels)) <= 1e-12
    assert 0.0 <= auc <= 1.0


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=4, max_size=25, unique=True),
       st.integers(0, 1000))
def test_reversal_maps_auc_to_complement(scores, seed):
    labels = np.random.default_rng(seed).integers(0, 2, len(scores))
    labels[:2] = [0, 1]
    a = roc_curve(scores, labels).auc
    b = roc_curve(-np.asarray(scores), labels).auc
    assert a + b == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------- trust

def test_qa_trust_examples():
    assert qa_trust(TrustRecord(0.8, True)) == pytest.approx(0.8)
    assert qa_trust(TrustRecord(0.8, False)) == pytest.approx(0.2)
    assert qa_trust(TrustRecord(1.0, False)) == 0.0
    assert qa_trust(TrustRecord(0.5, True), TrustConfig(alpha=2.0)) == 0.25
    with pytest.raises(ValueError):
        TrustRecord(1.2, True)
    with pytest.raises(ValueError):
        TrustConfig(gamma=0.0)


@given(st.floats(0, 1), st.booleans(), st.floats(0.01, 5), st.floats(0.01, 5))
def test_qa_trust_range(c, ok, a, b):
    assert 0.0 <= qa_trust(TrustRecord(c, ok), TrustConfig(alpha=a, beta=b)) <= 1.0


def test_density_examples():
    one = trust_density([1.0], grid=[1.0])[0]
    assert one == pytest.approx(1 / (0.5 * math.sqrt(2 * math.pi)), abs=1e-12)
    assert round(one, 5) == 0.79788
    two = trust_density([0.0, 1.0], grid=[0.5])[0]
    assert two == pytest.approx(oracles.trust_density([0.0, 1.0], 0.5), abs=1e-15)
    assert two == pytest.approx(math.exp(-1) / (0.5 * math.sqrt(2 * math.pi)), abs=1e-12)
    assert len(trust_grid()) == 201
    assert trust_density([0.3]).shape == (201,)
    with pytest.raises(ValueError):
        trust_density([])


def test_normalized_density_integrates_to_one():
    cfg = TrustConfig(normalized=True, grid_points=4001)
    x = np.linspace(-3, 4, 4001)
    rho = trust_density([0.2, 0.9, 0.5], cfg, grid=x)
    assert np.trapezoid(rho, x) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("seed", range(100))
def test_density_matches_direct_sum(seed):
    r = np.random.default_rng(seed)
    q = r.uniform(size=r.integers(1, 40))
    grid = trust_grid()
    got = trust_density(q, grid=grid)
    want = [oracles.trust_density(q.tolist(), x) for x in grid]
    assert np.max(np.abs(got - want)) <= 1e-12
    assert np.all(got >= 0)
    np.testing.assert_allclose(trust_density(r.permutation(q), grid=grid), got, atol=1e-15)


def test_spectrum_and_net_score():
    assert net_trust_score({"DP": 0.85, "R": 0.95}) == pytest.approx(0.90)
    assert round(net_trust_score([0.93, 0.92, 0.91, 0.93]), 2) == 0.92
    assert net_trust_score([0.93, 0.92, 0.91, 0.93]) == pytest.approx(0.9225)
    spec = trust_spectrum({"a": [0.4] * 3, "b": [0.4]})
    assert spec == {"a": pytest.approx(0.4), "b": pytest.approx(0.4)}
    assert net_trust_score(spec) == pytest.approx(0.4)
    with pytest.raises(ValueError, match="LFT"):
        trust_spectrum({"SP": [0.1], "LFT": []})
    with pytest.raises(ValueError):
        net_trust_score([])
