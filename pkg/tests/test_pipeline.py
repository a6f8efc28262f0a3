import numpy as np
import pytest

from burnnet.artifacts import read_csv, read_json, write_csv, write_json, write_svg_plot
from burnnet.metrics import METRIC_NAMES
from burnnet.model import BINARY, MULTICLASS, BurnClass
from burnnet.phantom import DataError, generate_dataset
from burnnet.pipeline import (Predictions, RunConfig, binary_report, class_labels, load_config,
                              prepare_data, targets_for, trust_report)


def test_config_defaults_and_validation():
    cfg = RunConfig()
    assert cfg.folds == 20 and cfg.batch == 32 and cfg.factor == 10
    assert cfg.model_config().input_shape == (1, 22, 34)
    assert cfg.model_config().decoder_channels == tuple(reversed(cfg.widths))
    for bad in ({"task": "regression"}, {"widths": (1, 2, 3)}, {"folds": 0},
                {"epochs": 0}, {"augment": "rotate"}):
        with pytest.raises(ValueError):
            RunConfig(**bad)


def test_ini_roundtrip_and_overrides(tmp_path):
    cfg = RunConfig(seed=4, task=MULTICLASS, widths=(3, 4, 5, 6), pretrain=False, lr=0.01)
    path = tmp_path / "c.ini"
    path.write_text(cfg.to_ini())
    back = load_config(path)
    assert back == cfg
    over = load_config(path, {"seed": 9, "epochs": None})
    assert over.seed == 9 and over.epochs == cfg.epochs


def test_ini_errors(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[run]\nnot_a_key = 1\n")
    with pytest.raises(ValueError, match="not_a_key"):
        load_config(path)
    path.write_text("[other]\nseed = 1\n")
    with pytest.raises(ValueError, match="run"):
        load_config(path)
    path.write_text("[run]\npretrain = maybe\n")
    with pytest.raises(ValueError, match="boolean"):
        load_config(path)
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "missing.ini")


def test_config_hash_ignores_jobs_and_out():
    a = RunConfig(jobs=1, out="x")
    assert a.config_hash() == RunConfig(jobs=4, out="y").config_hash()
    assert a.config_hash() != RunConfig(seed=1).config_hash()
    assert set(a.meta()) == {"config_hash", "seed", "version"}


def test_targets_and_labels():
    depth = np.array([int(c) for c in (BurnClass.SP, BurnClass.DP, BurnClass.LFT, BurnClass.DFT)])
    np.testing.assert_array_equal(targets_for(depth, BINARY), [0, 1, 0, 0])
    np.testing.assert_array_equal(targets_for(depth, MULTICLASS), [0, 1, 2, 3])
    assert class_labels(BINARY) == ["Rest", "DP"]
    assert class_labels(MULTICLASS) == ["SP", "DP", "LFT", "DFT"]


def test_prepare_data_shapes_and_errors():
    cfg = RunConfig(per_class=2, rows=40, cols=50, factor=2)
    data = prepare_data(cfg)
    assert data.small.shape == (8, 1, 20, 25)
    assert data.unburned.shape == (2, 1, 20, 25)
    assert data.full.shape == (8, 40, 50)
    with pytest.raises(DataError):
        prepare_data(RunConfig(rows=41, cols=50), generate_dataset(1, rows=40, cols=50))
    only = generate_dataset(1, classes=(BurnClass.SP, BurnClass.DP), rows=40, cols=50)
    with pytest.raises(DataError, match="LFT"):
        prepare_data(RunConfig(rows=40, cols=50, task=MULTICLASS), only)


def _pred(task, target, predicted, confidence):
    n = len(target)
    probs = np.where(np.asarray(predicted) == 1, confidence, 1 - np.asarray(confidence))
    return Predictions(np.zeros(n, int), np.zeros(n, int), np.asarray(target),
                       np.asarray(predicted), np.asarray(confidence, float), probs, task)


def test_perfect_classifier_metrics():
    _, m = binary_report([1, 0, 0, 1, 0], [1, 0, 0, 1, 0])
    assert set(m) == set(METRIC_NAMES)
    assert all(v == 1.0 for v in m.values())


def test_trust_report_grouped_by_true_class():
    pred = _pred(BINARY, [1, 1, 0, 0, 0], [1, 0, 0, 0, 1], [0.9, 0.7, 0.8, 0.6, 0.9])
    rep = trust_report(pred)
    np.testing.assert_allclose(rep["trust"], [0.9, 0.3, 0.8, 0.6, 0.1])
    assert rep["spectrum"]["DP"] == pytest.approx(0.6)
    assert rep["spectrum"]["Rest"] == pytest.approx(0.5)
    assert rep["net_trust_score"] == pytest.approx(0.55)
    assert len(rep["grid"]) == 201 and set(rep["density"]) == {"all", "DP", "Rest"}
    with pytest.raises(DataError, match="DP"):
        trust_report(_pred(BINARY, [0, 0], [0, 1], [0.5, 0.5]))


def test_artifact_writers(tmp_path):
    meta = {"config_hash": "abc", "seed": 3, "version": "0.1.0"}
    write_csv(tmp_path / "a" / "t.csv", ["x", "y"], [(1, 0.1), (2, np.float64(0.25))], meta)
    header, rows, m = read_csv(tmp_path / "a" / "t.csv")
    assert header == ["x", "y"] and rows == [["1", "0.1"], ["2", "0.25"]]
    assert m == {"config_hash": "abc", "seed": "3", "version": "0.1.0"}
    write_json(tmp_path / "j.json", {"v": np.array([1.0, np.nan]), "k": np.int64(2)}, meta, "demo")
    doc = read_json(tmp_path / "j.json")
    assert doc["schema"] == "burnnet/demo/1" and doc["v"] == [1.0, None] and doc["k"] == 2
    svg = write_svg_plot(tmp_path / "p.svg", {"a": ([0, 1], [0, 1])}, meta, "t").read_text()
    assert "config_hash=abc" in svg and "<polyline" in svg
