"""Repeated-split benchmark over a directory of labeled CSV datasets."""

from __future__ import annotations

import json
import logging
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Dataset, load_csv, split_scenario
from .pipeline import PipelineConfig, atomic_write, run_pipeline

logger = logging.getLogger(__name__)

# (rows, dimension, anomalies) of the public exports, used as ingestion sanity checks
EXPECTED_SHAPES: dict[str, tuple[int, int, int]] = {
    "thyroid": (7200, 6, 534),
    "mammography": (11183, 6, 250),
    "seismic": (2584, 15, 170),
    "satimage-2": (5803, 36, 71),
    "vowels": (1456, 12, 50),
    "musk": (3062, 166, 97),
    "smtp": (95156, 3, 30),
    "http": (567479, 3, 2211),
}

# Reference mean AUC / best F1 for this method on each dataset; shown for context only.
REFERENCE = {
    "thyroid": (0.873, 0.643),
    "mammography": (0.863, 0.473),
    "seismic": (0.736, 0.554),
    "satimage-2": (0.979, 0.949),
    "vowels": (0.824, 0.427),
    "musk": (1.000, 1.000),
    "smtp": (0.932, 0.825),
    "http": (0.998, 0.981),
}

PROTOCOL = (
    "Each run draws a uniform training pool of train_frac of the rows; "
    "observed_normal_frac of the pool's true normals are revealed as labeled normals, "
    "the rest of the pool is unlabeled, and the remaining rows form the test set on "
    "which AUC and best F1 are measured."
)


def canonical_name(path: Path) -> str:
    return path.stem.lower().replace("_", "-")


def shape_check(name: str, data: Dataset) -> str | None:
    exp = EXPECTED_SHAPES.get(name)
    if exp is None or data.labels is None:
        return None
    got = (data.n_samples, data.n_features, int(data.labels.sum()))
    if got != exp:
        return f"{name}: expected (rows, dims, anomalies)={exp}, found {got}"
    return None


def subsample_rows(data: Dataset, max_rows: int, seed: int) -> Dataset:
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(data.n_samples, size=max_rows, replace=False))
    return data.subset(idx, name=data.name)


@dataclass
class DatasetResult:
    name: str
    runs: list[dict] = field(default_factory=list)
    error: str | None = None
    note: str | None = None
    warning: str | None = None
    n_rows: int | None = None
    seconds: float = 0.0

    def aggregate(self) -> dict:
        if not self.runs:
            return {}
        aucs = np.array([r["auc"] for r in self.runs])
        f1s = np.array([r["best_f1"] for r in self.runs])
        return {
            "auc_mean": float(aucs.mean()),
            "auc_std": float(aucs.std()),
            "f1_mean": float(f1s.mean()),
            "f1_std": float(f1s.std()),
        }

    def to_dict(self, include_timings: bool = True) -> dict:
        doc = {
            "name": self.name,
            "status": "failed" if self.error else "ok",
            "n_rows": self.n_rows,
            "runs": [
                r if include_timings else {k: v for k, v in r.items() if k != "timings"}
                for r in self.runs
            ],
            **self.aggregate(),
        }
        for key in ("error", "note", "warning"):
            if getattr(self, key):
                doc[key] = getattr(self, key)
        if self.name in REFERENCE:
            doc["reference_auc"], doc["reference_f1"] = REFERENCE[self.name]
        if include_timings:
            doc["seconds"] = self.seconds
        return doc


@dataclass
class BenchmarkReport:
    config: PipelineConfig
    runs: int
    seed: int
    datasets: list[DatasetResult]

    def to_dict(self, include_timings: bool = True) -> dict:
        return {
            "protocol": PROTOCOL,
            "config": self.config.to_dict(),
            "runs": self.runs,
            "master_seed": self.seed,
            "datasets": [d.to_dict(include_timings) for d in self.datasets],
        }

    def table(self) -> str:
        lines = [
            f"{'dataset':<14}{'AUC':>16}{'best F1':>16}{'reference':>16}{'time s':>9}",
            "-" * 71,
        ]
        for d in self.datasets:
            pub = REFERENCE.get(d.name)
            pub_s = f"{pub[0]:.3f}/{pub[1]:.3f}" if pub else "-"
            if d.error:
                lines.append(f"{d.name:<14}{'FAILED: ' + d.error[:48]:>32}{pub_s:>16}")
                continue
            a = d.aggregate()
            lines.append(
                f"{d.name:<14}{a['auc_mean']:>9.3f}±{a['auc_std']:.3f}"
                f"{a['f1_mean']:>9.3f}±{a['f1_std']:.3f}{pub_s:>16}{d.seconds:>9.1f}"
            )
            if d.note:
                lines.append(f"  note: {d.note}")
        return "\n".join(lines)

    def write(self, path: str | Path) -> None:
        atomic_write(path, json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def run_dataset(data: Dataset, config: PipelineConfig, runs: int, seed: int) -> list[dict]:
    out = []
    for r in range(runs):
        run_seed = seed + r
        split = split_scenario(data, run_seed, config.train_frac, config.observed_normal_frac)
        res = run_pipeline(data, split, config.with_overrides(seed=run_seed))
        if res.report is None:
            raise ValueError("test partition lacks one of the classes; cannot score")
        out.append({
            "seed": run_seed,
            "auc": res.report.auc,
            "best_f1": res.report.best_f1,
            "n_selected": int(res.selected.size),
            "timings": res.timings,
        })
        logger.info("%s run %d: AUC=%.4f F1=%.4f", data.name, r, res.report.auc, res.report.best_f1)
    return out


def run_benchmark(
    data_dir: str | Path,
    config: PipelineConfig | None = None,
    runs: int = 10,
    seed: int = 0,
    label_column: str = "label",
    datasets: list[str] | None = None,
    max_rows: int | None = None,
) -> BenchmarkReport:
    """Benchmark every ``*.csv`` in ``data_dir`` (or the named subset).

    Rows beyond ``max_rows`` are dropped by uniform subsampling, and the
    report says so. A dataset that fails is recorded and the rest continue.
    """
    cfg = config or PipelineConfig()
    data_dir = Path(data_dir)
    paths = sorted(data_dir.glob("*.csv"))
    if datasets:
        wanted = {n.lower() for n in datasets}
        found = {canonical_name(p) for p in paths}
        paths = [p for p in paths if canonical_name(p) in wanted]
        missing = sorted(wanted - found)
    else:
        missing = []
    results = [DatasetResult(name, error=f"no CSV for {name!r} in {data_dir}") for name in missing]
    for path in paths:
        name = canonical_name(path)
        res = DatasetResult(name)
        t0 = time.perf_counter()
        try:
            data = load_csv(path, label_column, name=name)
            res.warning = shape_check(name, data)
            if res.warning:
                logger.warning(res.warning)
            if max_rows is not None and data.n_samples > max_rows:
                data = subsample_rows(data, max_rows, seed)
                res.note = f"uniformly subsampled to {max_rows} rows (seed {seed})"
            res.n_rows = data.n_samples
            res.runs = run_dataset(data, cfg, runs, seed)
        except Exception as exc:  # one bad dataset must not sink the batch
            res.error = f"{type(exc).__name__}: {exc}"
            logger.error("dataset %s failed: %s", name, res.error)
            logger.debug(traceback.format_exc())
        res.seconds = time.perf_counter() - t0
        results.append(res)
    results.sort(key=lambda d: d.name)
    return BenchmarkReport(cfg, runs, seed, results)
