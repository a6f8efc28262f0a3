"""``burnnet`` command line: generate, train, evaluate, baseline, trust, explain, report.

Exit codes: 0 success, 2 usage, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import shutil
import sys
from pathlib import Path

import numpy as np

from . import artifacts as art
from ._version import __version__
from .checkpoint import CheckpointError, load_classifier, save_classifier, save_source
from .metrics import METRIC_NAMES, classification_metrics, confusion_from_predictions, pr_curve, roc_curve
from .model import BINARY, BURN_DEPTHS, BurnClass
from .ndtensor import NumericalError, ShapeError
from .phantom import DataError, generate_dataset, write_dataset
from .pipeline import (Predictions, RunConfig, class_labels, explain, fold_plan, load_config,
                       out_of_fold, prepare_data, pretrain, run_baselines, train_folds,
                       trust_report)
from .saliency import class_average_heatmap, depth_profile
from .texture import ConvergenceError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("burnnet")


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _widths(text: str) -> tuple:
    try:
        w = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("widths must be four comma-separated integers") from None
    if len(w) != 4 or min(w) < 1:
        raise argparse.ArgumentTypeError("widths must be four positive integers")
    return w


def _write_config(cfg: RunConfig, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    header = "".join(f"# {k}={v}\n" for k, v in sorted(cfg.meta().items()))
    path.write_text(header + cfg.to_ini())


def _open_run(run_dir) -> tuple[RunConfig, object, list]:
    run = Path(run_dir)
    ini = run / "config.ini"
    if not ini.exists():
        raise DataError(f"{run} is not a run directory (no config.ini); run 'burnnet train' first")
    cfg = load_config(ini, {"out": str(run)})
    data = prepare_data(cfg)
    folds = fold_plan(cfg, data)
    stored = run / "folds.csv"
    if stored.exists():
        _, rows, _ = art.read_csv(stored)
        recorded = np.array([int(r[3]) for r in rows])
        planned = np.zeros(len(data.target), dtype=np.int64)
        for i, (_, test) in enumerate(folds):
            planned[test] = i
        if recorded.shape != planned.shape or np.any(recorded != planned):
            raise DataError(f"{stored} does not match the fold plan for this config")
    return cfg, data, folds


def _fold_dir(run: Path, i: int) -> Path:
    return run / "folds" / f"fold_{i:02d}"


def _load_classifiers(cfg: RunConfig, run: Path, n: int):
    out = []
    for i in range(n):
        path = _fold_dir(run, i) / "classifier.ckpt"
        if not path.exists():
            raise DataError(f"missing checkpoint {path}; run 'burnnet train' first")
        clf, meta = load_classifier(path)
        if meta.get("config_hash") != cfg.config_hash():
            raise DataError(f"{path} was trained with a different config")
        out.append(clf)
    return out


def _trace_rows(trace):
    return [(e + 1, loss) for e, loss in enumerate(trace)]


def _curve_rows(curve):
    return list(zip(curve.thresholds, curve.x, curve.y))


def _binary_view(pred: Predictions):
    """DP-vs-rest truth and decisions for either task."""
    if pred.task == BINARY:
        return pred.target, pred.predicted
    dp = BURN_DEPTHS.index(BurnClass.DP)
    return (pred.target == dp).astype(np.int64), (pred.predicted == dp).astype(np.int64)


def _confusion_payload(cm):
    return {"tp": cm.tp, "fp": cm.fp, "fn": cm.fn, "tn": cm.tn}


# --------------------------------------------------------------------------
# verbs
# --------------------------------------------------------------------------

def cmd_generate(args) -> int:
    if args.per_class < 1:
        raise UsageError("--per-class must be at least 1")
    try:
        classes = [BurnClass.parse(c) for c in args.classes.split(",") if c.strip()]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not classes or len(set(classes)) != len(classes):
        raise UsageError("--classes must list distinct class names")
    settings = {"per_class": args.per_class, "classes": [c.label for c in classes],
                "seed": args.seed, "rows": args.rows, "cols": args.cols}
    meta = {"config_hash": hashlib.sha256(json.dumps(settings, sort_keys=True).encode()).hexdigest()[:16],
            "seed": args.seed, "version": __version__}
    ds = generate_dataset(args.per_class, classes, args.seed, rows=args.rows, cols=args.cols)
    out = write_dataset(ds, args.out, meta)
    print(f"wrote {len(ds)} images to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    overrides = {"data": args.data, "out": args.out, "seed": args.seed, "task": args.task,
                 "folds": args.folds, "epochs": args.epochs, "source_epochs": args.source_epochs,
                 "batch": args.batch, "lr": args.lr, "widths": args.widths,
                 "bottleneck": args.bottleneck, "per_class": args.per_class,
                 "augment": args.augment, "jobs": args.jobs, "pretrain": args.pretrain,
                 "freeze_encoder": args.freeze_encoder}
    cfg = load_config(args.config, overrides)
    if cfg.data != "synthetic" and not Path(cfg.data).is_dir():
        raise DataError(f"data directory {cfg.data} does not exist")
    run = Path(cfg.out)
    meta = cfg.meta()
    data = prepare_data(cfg)
    folds = fold_plan(cfg, data)
    _write_config(cfg, run / "config.ini")
    fold_of = np.zeros(len(data.target), dtype=np.int64)
    for i, (_, test) in enumerate(folds):
        fold_of[test] = i
    prov = [p for p, lab in zip(data.raw.provenance, data.raw.labels) if BurnClass(int(lab)) in BURN_DEPTHS]
    art.write_csv(run / "folds.csv", ["index", "provenance", "class", "fold"],
                  [(i, p, BurnClass(int(d)).label, f)
                   for i, (p, d, f) in enumerate(zip(prov, data.depth, fold_of))], meta)

    source = None
    if cfg.pretrain:
        log.info("pre-training source model for %d epochs", cfg.source_epochs)
        source, trace = pretrain(cfg, data)
        save_source(run / "source" / "source.ckpt", source, meta)
        art.write_csv(run / "source" / "trace.csv", ["epoch", "loss"], _trace_rows(trace), meta)
    elif (run / "source").exists():
        shutil.rmtree(run / "source")

    if (run / "folds").exists():
        shutil.rmtree(run / "folds")
    log.info("training %d folds for %d epochs (jobs=%d)", len(folds), cfg.epochs, cfg.jobs)
    for i, (clf, trace) in enumerate(train_folds(cfg, data, folds, source)):
        save_classifier(_fold_dir(run, i) / "classifier.ckpt", clf, {**meta, "fold": i})
        art.write_csv(_fold_dir(run, i) / "trace.csv", ["epoch", "loss"], _trace_rows(trace),
                      {**meta, "fold": i})
    print(f"trained {len(folds)} fold classifiers in {run}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg, data, folds = _open_run(args.run)
    run = Path(args.run)
    meta = cfg.meta()
    pred = out_of_fold(_load_classifiers(cfg, run, len(folds)), data, folds, cfg.task)
    names = class_labels(cfg.task)
    prov = [p for p, lab in zip(data.raw.provenance, data.raw.labels) if BurnClass(int(lab)) in BURN_DEPTHS]
    prob_cols = ["p_DP"] if cfg.task == BINARY else [f"p_{n}" for n in names]
    rows = []
    for i in range(len(pred.target)):
        probs = [pred.probs[i]] if cfg.task == BINARY else list(pred.probs[i])
        rows.append([i, prov[i], BurnClass(int(pred.depth[i])).label, int(pred.fold[i]),
                     names[pred.target[i]], names[pred.predicted[i]], pred.confidence[i], *probs])
    art.write_csv(run / "eval" / "predictions.csv",
                  ["index", "provenance", "class", "fold", "actual", "predicted", "confidence",
                   *prob_cols], rows, meta)

    truth, decision = _binary_view(pred)
    cm = confusion_from_predictions(truth, decision)
    metrics = classification_metrics(cm)
    roc = roc_curve(pred.scores(), pred.positives())
    pr = pr_curve(pred.scores(), pred.positives())
    art.write_csv(run / "eval" / "roc.csv", ["threshold", "fpr", "tpr"], _curve_rows(roc), meta)
    art.write_csv(run / "eval" / "pr.csv", ["threshold", "recall", "precision"], _curve_rows(pr), meta)
    art.write_csv(run / "eval" / "confusion.csv", ["decision", "actual_DP", "actual_Rest"],
                  [("predicted_DP", cm.tp, cm.fp), ("predicted_Rest", cm.fn, cm.tn)], meta)
    payload = {"task": cfg.task, "n": len(pred.target), "folds": len(folds),
               "metrics": metrics, "confusion": _confusion_payload(cm),
               "roc_auc": roc.auc, "pr_auc": pr.auc}
    if cfg.task != BINARY:
        full = pred.confusion()
        payload["multiclass_accuracy"] = float(np.trace(full) / full.sum())
        payload["multiclass_confusion"] = {"labels": names, "counts": full}
    art.write_json(run / "eval" / "metrics.json", payload, meta, "metrics")
    print("  ".join(f"{k}={metrics[k]:.4f}" for k in METRIC_NAMES) + f"  roc_auc={roc.auc:.4f}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    cfg, data, folds = _open_run(args.run)
    run = Path(args.run)
    meta = cfg.meta()
    results = run_baselines(cfg, data, folds)
    fold_of = np.zeros(len(data.target), dtype=np.int64)
    for i, (_, test) in enumerate(folds):
        fold_of[test] = i
    payload = {}
    for name, r in results.items():
        cm = confusion_from_predictions(r["target"], r["predicted"])
        roc = roc_curve(r["score"], r["target"])
        pr = pr_curve(r["score"], r["target"])
        payload[name] = {"metrics": classification_metrics(cm), "confusion": _confusion_payload(cm),
                         "roc_auc": roc.auc, "pr_auc": pr.auc}
        art.write_csv(run / "baseline" / f"{name}_roc.csv", ["threshold", "fpr", "tpr"],
                      _curve_rows(roc), meta)
        art.write_csv(run / "baseline" / f"{name}_pr.csv", ["threshold", "recall", "precision"],
                      _curve_rows(pr), meta)
    lda, svm = results["lda"], results["svm"]
    art.write_csv(run / "baseline" / "predictions.csv",
                  ["index", "class", "fold", "target", "lda_score", "lda_predicted",
                   "svm_score", "svm_predicted"],
                  [(i, BurnClass(int(data.depth[i])).label, fold_of[i], lda["target"][i],
                    lda["score"][i], lda["predicted"][i], svm["score"][i], svm["predicted"][i])
                   for i in range(len(data.depth))], meta)
    art.write_json(run / "baseline" / "metrics.json", {"folds": len(folds), "models": payload},
                   meta, "baseline")
    for name, p in payload.items():
        print(f"{name}: " + "  ".join(f"{k}={p['metrics'][k]:.4f}" for k in METRIC_NAMES))
    return EXIT_OK


def _read_predictions(cfg: RunConfig, run: Path) -> Predictions:
    path = run / "eval" / "predictions.csv"
    if not path.exists():
        raise DataError(f"missing {path}; run 'burnnet evaluate' first")
    header, rows, _ = art.read_csv(path)
    names = class_labels(cfg.task)
    col = {h: k for k, h in enumerate(header)}
    pcols = [k for h, k in col.items() if h.startswith("p_")]
    probs = np.array([[float(r[k]) for k in pcols] for r in rows])
    return Predictions(
        fold=np.array([int(r[col["fold"]]) for r in rows]),
        depth=np.array([int(BurnClass.parse(r[col["class"]])) for r in rows]),
        target=np.array([names.index(r[col["actual"]]) for r in rows]),
        predicted=np.array([names.index(r[col["predicted"]]) for r in rows]),
        confidence=np.array([float(r[col["confidence"]]) for r in rows]),
        probs=probs[:, 0] if cfg.task == BINARY else probs, task=cfg.task)


def cmd_trust(args) -> int:
    run = Path(args.run)
    cfg = load_config(run / "config.ini", {"out": str(run)}) if (run / "config.ini").exists() else None
    if cfg is None:
        raise DataError(f"{run} is not a run directory")
    meta = cfg.meta()
    pred = _read_predictions(cfg, run)
    tcfg = cfg.trust_config()
    rep = trust_report(pred, tcfg)
    names = list(rep["density"])
    art.write_csv(run / "trust" / "density.csv", ["q", *names],
                  [(q, *(rep["density"][n][k] for n in names)) for k, q in enumerate(rep["grid"])],
                  meta)
    labels = class_labels(cfg.task)
    art.write_csv(run / "trust" / "records.csv",
                  ["index", "actual", "predicted", "confidence", "correct", "trust"],
                  [(i, labels[pred.target[i]], labels[pred.predicted[i]], pred.confidence[i],
                    int(pred.correct[i]), rep["trust"][i]) for i in range(len(pred.target))], meta)
    art.write_json(run / "trust" / "trust.json",
                   {"task": cfg.task, "spectrum": rep["spectrum"],
                    "net_trust_score": rep["net_trust_score"],
                    "alpha": tcfg.alpha, "beta": tcfg.beta, "gamma": tcfg.gamma,
                    "grid_points": tcfg.grid_points, "n": len(pred.target)}, meta, "trust")
    print("  ".join(f"{k}={v:.4f}" for k, v in rep["spectrum"].items())
          + f"  S_net={rep['net_trust_score']:.4f}")
    return EXIT_OK


def depth_centroid(profile: np.ndarray) -> float:
    """Mean depth (row index, 0 = skin surface) weighted by the profile's row means."""
    w = np.asarray(profile)[:, 0]
    total = w.sum()
    return float((np.arange(len(w)) * w).sum() / total) if total > 0 else float("nan")


def cmd_explain(args) -> int:
    cfg, data, folds = _open_run(args.run)
    run = Path(args.run)
    meta = cfg.meta()
    maps = explain(_load_classifiers(cfg, run, len(folds)), data, folds, cfg.task)
    summary = {}
    for name, hms in maps.items():
        if not hms:
            raise DataError(f"class {name} has no images to explain")
        avg = class_average_heatmap(hms)
        art.write_png(run / "explain" / f"heatmap_{name}.png", avg.to_uint8(), meta)
        art.write_csv(run / "explain" / f"heatmap_{name}.csv", [f"c{j}" for j in range(avg.shape[1])],
                      avg.values.tolist(), meta)
        prof = depth_profile(avg)
        art.write_csv(run / "explain" / f"depth_{name}.csv", ["row", "mean", "std"],
                      [(r, m, s) for r, (m, s) in enumerate(prof)], meta)
        summary[name] = {"n": len(hms), "depth_centroid": depth_centroid(prof),
                         "profile_mean": float(prof[:, 0].mean())}
    art.write_json(run / "explain" / "summary.json", {"classes": summary}, meta, "explain")
    print("  ".join(f"{k}: centroid={v['depth_centroid']:.3f}" for k, v in summary.items()))
    return EXIT_OK


def _curve_from_csv(path):
    _, rows, _ = art.read_csv(path)
    a = np.array([[float(x) for x in r[1:]] for r in rows])
    return a[:, 0], a[:, 1]


def cmd_report(args) -> int:
    run = Path(args.run)
    if not (run / "eval" / "metrics.json").exists():
        raise DataError(f"missing {run / 'eval' / 'metrics.json'}; run 'burnnet evaluate' first")
    cfg = load_config(run / "config.ini", {"out": str(run)})
    meta = cfg.meta()
    ev = art.read_json(run / "eval" / "metrics.json")
    rows = [("BurnNet", ev["metrics"], ev["roc_auc"], ev["pr_auc"])]
    roc_series = {"BurnNet": _curve_from_csv(run / "eval" / "roc.csv")}
    pr_series = {"BurnNet": _curve_from_csv(run / "eval" / "pr.csv")}
    if (run / "baseline" / "metrics.json").exists():
        bl = art.read_json(run / "baseline" / "metrics.json")
        for name, p in bl["models"].items():
            rows.append((f"GLCM+{name.upper()}", p["metrics"], p["roc_auc"], p["pr_auc"]))
            roc_series[f"GLCM+{name.upper()}"] = _curve_from_csv(run / "baseline" / f"{name}_roc.csv")
            pr_series[f"GLCM+{name.upper()}"] = _curve_from_csv(run / "baseline" / f"{name}_pr.csv")
    out = run / "report"
    art.write_svg_plot(out / "roc.svg", roc_series, meta, "ROC", "false positive rate",
                       "true positive rate", ylim=(0.0, 1.0))
    art.write_svg_plot(out / "pr.svg", pr_series, meta, "Precision-recall", "recall",
                       "precision", ylim=(0.0, 1.0))

    fmt = lambda v: "n/a" if v is None else f"{v:.2f}"  # noqa: E731
    lines = ["# BurnNet run report", "",
             f"config hash `{meta['config_hash']}`, seed {meta['seed']}, version {meta['version']}",
             "", f"Task: {cfg.task}, {ev['folds']}-fold cross-validation, {ev['n']} images.", "",
             "| Classifier | " + " | ".join(METRIC_NAMES) + " | ROC AUC | PR AUC |",
             "|---" * (len(METRIC_NAMES) + 3) + "|"]
    for name, m, ra, pa in rows:
        lines.append(f"| {name} | " + " | ".join(fmt(m[k]) for k in METRIC_NAMES)
                     + f" | {fmt(ra)} | {fmt(pa)} |")
    c = ev["confusion"]
    lines += ["", "Confusion matrix (rows predicted, columns actual):", "",
              "| | DP | Rest |", "|---|---|---|",
              f"| DP | {c['tp']} | {c['fp']} |", f"| Rest | {c['fn']} | {c['tn']} |"]
    if (run / "trust" / "trust.json").exists():
        tr = art.read_json(run / "trust" / "trust.json")
        lines += ["", "Trust spectrum: " + ", ".join(f"{k} {v:.2f}" for k, v in tr["spectrum"].items())
                  + f"; NetTrustScore {tr['net_trust_score']:.2f}."]
        header, drows, _ = art.read_csv(run / "trust" / "density.csv")
        d = np.array([[float(x) for x in r] for r in drows])
        art.write_svg_plot(out / "trust_density.svg",
                           {h: (d[:, 0], d[:, k]) for k, h in enumerate(header) if k > 0},
                           meta, "Trust density", "question-answer trust", "density")
    if (run / "explain" / "summary.json").exists():
        ex = art.read_json(run / "explain" / "summary.json")
        order = [c.label for c in BURN_DEPTHS if c.label in ex["classes"]]
        series = {}
        for name in order:
            _, prows, _ = art.read_csv(run / "explain" / f"depth_{name}.csv")
            p = np.array([[float(x) for x in r] for r in prows])
            series[name] = (p[:, 0], p[:, 1])
        xmax = max(float(x.max()) for x, _ in series.values())
        art.write_svg_plot(out / "depth_profiles.svg", series, meta, "Saliency depth profile",
                           "depth row", "mean heatmap", xlim=(0.0, xmax))
        lines += ["", "Saliency depth centroid (rows from the surface): "
                  + ", ".join(f"{k} {ex['classes'][k]['depth_centroid']:.2f}" for k in order) + "."]
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.md").write_text("\n".join(lines) + "\n")
    print(f"wrote {out / 'report.md'}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="burnnet", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"burnnet {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="verb", required=True, metavar="VERB")

    g = sub.add_parser("generate", help="write a synthetic phantom dataset")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--per-class", type=int, default=80, help="images per class (default 80)")
    g.add_argument("--classes", default="Unburned,SP,DP,LFT,DFT",
                   help="comma-separated class names")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--rows", type=int, default=213, help="depth pixels")
    g.add_argument("--cols", type=int, default=338, help="lateral pixels")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="source pre-training and per-fold classifier training")
    t.add_argument("--config", help="INI file with a [run] section; flags override it")
    t.add_argument("--data", help="dataset directory or 'synthetic'")
    t.add_argument("--out", help="run directory")
    t.add_argument("--seed", type=int)
    t.add_argument("--task", choices=["binary", "multiclass"])
    t.add_argument("--folds", type=int)
    t.add_argument("--epochs", type=int, help="classifier epochs")
    t.add_argument("--source-epochs", type=int)
    t.add_argument("--batch", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--widths", type=_widths, help="encoder channels, e.g. 16,32,64,128")
    t.add_argument("--bottleneck", type=int, help="bottleneck channels")
    t.add_argument("--per-class", type=int, help="synthetic images per class")
    t.add_argument("--augment", choices=["random", "double", "none"])
    t.add_argument("--jobs", type=int, help="folds trained in parallel")
    t.add_argument("--no-pretrain", dest="pretrain", action="store_const", const=False,
                   help="skip the source stage (cold-start encoder)")
    t.add_argument("--freeze-encoder", action="store_const", const=True,
                   help="train only the classifier head")
    t.set_defaults(func=cmd_train)

    for verb, func, text in (
            ("evaluate", cmd_evaluate, "pooled out-of-fold metrics, ROC and PR"),
            ("baseline", cmd_baseline, "GLCM features with LDA and SVM on the same folds"),
            ("trust", cmd_trust, "question-answer trust, densities, spectra and NetTrustScore"),
            ("explain", cmd_explain, "class-average guided Grad-CAM++ heatmaps and depth profiles"),
            ("report", cmd_report, "markdown summary and SVG plots")):
        s = sub.add_parser(verb, help=text)
        s.add_argument("--run", required=True, help="run directory written by 'train'")
        s.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"burnnet {args.verb}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError, ShapeError, OSError) as exc:
        print(f"burnnet {args.verb}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, ConvergenceError, FloatingPointError) as exc:
        print(f"burnnet {args.verb}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"burnnet {args.verb}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
