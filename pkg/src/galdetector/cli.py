"""Command-line interface: ``train``, ``score``, ``benchmark`` and ``inspect``.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 pipeline error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .benchmark import run_benchmark
from .dataset import Dataset, DataError, ScenarioSplit, load_csv, split_scenario
from .eval import auc
from .pipeline import ConfigError, GALModel, PipelineConfig, PipelineError, run_pipeline

logger = logging.getLogger("galdetector")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_PIPELINE = 0, 1, 2, 3

# flag name -> PipelineConfig field
_CONFIG_FLAGS = {
    "seed": "seed",
    "delta": "delta",
    "mu": "mu",
    "epsilon": "epsilon",
    "k": "k",
    "trees": "trees",
    "depth": "forest_depth",
    "detector_depth": "detector_depth",
    "observed_normal_frac": "observed_normal_frac",
    "train_frac": "train_frac",
    "aggregation": "aggregation",
    "n_sub": "n_sub",
    "rounds": "rounds",
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with flat PipelineConfig keys")
    p.add_argument("--seed", type=int)
    p.add_argument("--delta", type=float, help="fraction of unlabeled rows picked as potential anomalies")
    p.add_argument("--mu", type=float, help="weight of the global normal score in the fusion")
    p.add_argument("--epsilon", type=float, help="training weight of observed normals")
    p.add_argument("--k", type=int, help="number of normal-pattern clusters")
    p.add_argument("--trees", type=int, help="number of sparsity trees")
    p.add_argument("--depth", type=int, help="maximum sparsity-tree depth")
    p.add_argument("--n-sub", type=int, help="subsample size per sparsity tree")
    p.add_argument("--aggregation", choices=("mean", "max"))
    p.add_argument("--rounds", type=int, help="boosting rounds of the detector")
    p.add_argument("--detector-depth", type=int, help="maximum depth of each boosted tree")
    p.add_argument("--observed-normal-frac", type=float)
    p.add_argument("--train-frac", type=float)


def build_config(args: argparse.Namespace) -> PipelineConfig:
    base = PipelineConfig()
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        base = PipelineConfig.from_dict({**base.to_dict(), **doc})
    return base.with_overrides(**{field: getattr(args, flag) for flag, field in _CONFIG_FLAGS.items()})


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="galdetector", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run the pipeline on a CSV and write the model document")
    t.add_argument("--data", required=True)
    t.add_argument("--label-col", help="ground-truth column (1 = anomaly); drives the scenario split")
    t.add_argument("--observed-col",
                   help="column marking observed normals with 1; all other rows are unlabeled and no test split is made")
    t.add_argument("--out", required=True, help="model JSON path")
    t.add_argument("--report", help="write the test evaluation JSON here (and a .curve.csv next to it)")
    t.add_argument("--scores-table", help="write per-sample fused scores as CSV")
    _add_config_flags(t)

    s = sub.add_parser("score", help="score rows with a trained model")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--label-col", help="label column to drop from features (reports AUC if given)")
    s.add_argument("--out", help="output CSV (default: stdout)")
    s.add_argument("--threshold", type=float, help="add a 0/1 label column: 1 iff score >= threshold")

    b = sub.add_parser("benchmark", help="repeated-split benchmark over a directory of CSVs")
    b.add_argument("--data", required=True, help="directory containing <dataset>.csv files")
    b.add_argument("--label-col", default="label")
    b.add_argument("--runs", type=int, default=10)
    b.add_argument("--datasets", nargs="*", help="restrict to these dataset names")
    b.add_argument("--max-rows", type=int, help="uniformly subsample larger datasets to this many rows")
    b.add_argument("--out", help="report JSON path")
    _add_config_flags(b)

    i = sub.add_parser("inspect", help="print a model summary")
    i.add_argument("model")
    return parser


def cmd_train(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    if args.label_col and args.observed_col:
        raise ConfigError("--label-col and --observed-col are mutually exclusive")
    if not args.label_col and not args.observed_col:
        raise ConfigError("one of --label-col or --observed-col is required")
    data = load_csv(args.data, args.label_col or args.observed_col)
    if args.observed_col:
        obs = np.flatnonzero(data.labels == 1)
        unl = np.flatnonzero(data.labels == 0)
        if obs.size == 0:
            raise DataError(f"column {args.observed_col!r} marks no observed normals")
        split = ScenarioSplit(obs, unl, np.empty(0, dtype=np.int64), cfg.seed)
        data = Dataset(data.features, None, data.name, data.feature_names)
    else:
        try:
            split = split_scenario(data, cfg.seed, cfg.train_frac, cfg.observed_normal_frac)
        except ValueError as exc:
            raise DataError(str(exc)) from None
    res = run_pipeline(data, split, cfg)
    res.model.save(args.out)
    for name, secs in res.timings.items():
        print(f"stage {name:<10} {secs:8.3f} s")
    print(f"observed normals: {split.observed_normals.size}  unlabeled: {split.unlabeled.size}  "
          f"test: {split.test.size}")
    print(f"selected potential anomalies: {res.selected.size} "
          f"(delta={cfg.delta}, unlabeled={split.unlabeled.size})")
    if res.report is not None:
        print(f"test AUC: {res.report.auc:.4f}  best F1: {res.report.best_f1:.4f} "
              f"at threshold {res.report.best_threshold:.6g}")
        if args.report:
            res.report.write_json(args.report)
            res.report.write_curve_csv(str(Path(args.report).with_suffix("")) + ".curve.csv")
    if args.scores_table:
        weights = {int(i): float(w) for i, w in zip(res.training_set.index, res.training_set.weights)}
        res.scores.write_csv(args.scores_table, res.selected, weights)
    print(f"model written to {args.out}")
    return EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    try:
        model = GALModel.load(args.model)
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"cannot load model {args.model}: {exc}") from None
    data = load_csv(args.data, args.label_col)
    if data.n_features != model.n_features:
        raise DataError(f"model expects {model.n_features} features, data has {data.n_features}")
    if args.threshold is not None and not 0.0 < args.threshold < 1.0:
        raise ConfigError("--threshold must lie in (0, 1)")
    scores = model.predict_score(data.features)
    header = ["row", "score"] + (["label"] if args.threshold is not None else [])
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(header)
        for r, s in enumerate(scores):
            row = [r, repr(float(s))]
            if args.threshold is not None:
                row.append(int(s >= args.threshold))
            w.writerow(row)
    finally:
        if args.out:
            fh.close()
    if data.labels is not None and 0 < data.labels.sum() < data.n_samples:
        print(f"AUC: {auc(scores, data.labels):.6f}", file=sys.stderr)
    return EXIT_OK


def cmd_benchmark(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    if args.runs < 1:
        raise ConfigError("--runs must be >= 1")
    if not Path(args.data).is_dir():
        raise DataError(f"benchmark data directory not found: {args.data}")
    report = run_benchmark(args.data, cfg, args.runs, cfg.seed, args.label_col, args.datasets, args.max_rows)
    print(report.table())
    if args.out:
        report.write(args.out)
        print(f"report written to {args.out}")
    return EXIT_OK if all(d.error is None for d in report.datasets) else EXIT_PIPELINE


def cmd_inspect(args: argparse.Namespace) -> int:
    try:
        model = GALModel.load(args.model)
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"cannot load model {args.model}: {exc}") from None
    forest = model.forest
    leaves = [int(t.is_leaf.sum()) for t in forest.trees]
    print(f"features:        {model.n_features}")
    print(f"sparsity forest: {len(forest.trees)} trees, p={forest.p}, max depth {forest.max_depth}, "
          f"subsample {forest.n_sub_}, aggregation {forest.aggregation}, "
          f"leaves/tree mean {np.mean(leaves):.1f}")
    print(f"normal clusters: k={model.clusters.k}, objective {model.clusters.objective:.6g}, "
          f"{model.clusters.n_iter} iterations")
    print(f"fusion:          mu={model.config.mu}, delta={model.config.delta}, "
          f"epsilon={model.config.epsilon}, selected {model.n_selected}")
    det = model.detector
    print(f"detector:        {len(det.trees_)} trees, eta={det.learning_rate}, depth {det.max_depth}, "
          f"lambda={det.reg_lambda}, base score {det.base_score_:.6g}")
    print(f"seed:            {model.config.seed}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "score": cmd_score, "benchmark": cmd_benchmark, "inspect": cmd_inspect}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except PipelineError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
