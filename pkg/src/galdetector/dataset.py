"""Tabular data ingestion, min-max normalization and scenario splits.

A scenario models the observed-normal setting: a training pool in which only
some of the true normals carry a label, the rest of the pool is unlabeled,
and a held-out test partition.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Raised for unreadable or malformed input data."""


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray | None = None
    name: str = "dataset"
    feature_names: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        x = np.asarray(self.features, dtype=float)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise DataError(f"features must be a non-empty 2-D matrix, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DataError("features contain NaN or infinite values")
        x.setflags(write=False)
        object.__setattr__(self, "features", x)
        if self.labels is not None:
            y = np.asarray(self.labels)
            if y.shape != (x.shape[0],):
                raise DataError(f"labels shape {y.shape} does not match {x.shape[0]} rows")
            if not np.all((y == 0) | (y == 1)):
                raise DataError("labels must be 0 (normal) or 1 (anomaly)")
            y = y.astype(np.int64)
            y.setflags(write=False)
            object.__setattr__(self, "labels", y)
        if not self.feature_names:
            names = tuple(f"f{j + 1}" for j in range(x.shape[1]))
            object.__setattr__(self, "feature_names", names)
        elif len(self.feature_names) != x.shape[1]:
            raise DataError("feature_names length does not match feature count")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: np.ndarray, name: str | None = None) -> Dataset:
        idx = np.asarray(indices, dtype=np.int64)
        labels = None if self.labels is None else self.labels[idx]
        return Dataset(self.features[idx], labels, name or self.name, self.feature_names)


def load_csv(path: str | os.PathLike, label_column: str | None = None, name: str | None = None) -> Dataset:
    """Read a headered, comma-delimited CSV of decimal numbers.

    Every column except ``label_column`` becomes a feature, in file order.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if label_column is not None and label_column not in header:
            raise DataError(f"{path}: label column {label_column!r} not in header {header}")
        label_pos = header.index(label_column) if label_column is not None else -1
        rows: list[list[float]] = []
        labels: list[int] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {lineno} has {len(row)} columns, header has {len(header)}"
                )
            values = []
            for col, cell in enumerate(row):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: cannot parse {cell!r} at row {lineno}, column {header[col]!r}"
                    ) from None
                if col == label_pos:
                    if v not in (0.0, 1.0):
                        raise DataError(
                            f"{path}: label {cell!r} at row {lineno} is not 0 or 1"
                        )
                    labels.append(int(v))
                else:
                    if not math.isfinite(v):
                        raise DataError(
                            f"{path}: non-finite value {cell!r} at row {lineno}, column {header[col]!r}"
                        )
                    values.append(v)
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")
    names = tuple(h for i, h in enumerate(header) if i != label_pos)
    if not names:
        raise DataError(f"{path}: no feature columns")
    return Dataset(
        np.array(rows, dtype=float),
        np.array(labels, dtype=np.int64) if label_pos >= 0 else None,
        name or path.stem,
        names,
    )


def write_csv(data: Dataset, path: str | os.PathLike, label_column: str = "label") -> None:
    """Write ``data`` so that :func:`load_csv` reads it back unchanged."""
    header = list(data.feature_names)
    if data.labels is not None:
        header.append(label_column)
    tmp = Path(f"{path}.tmp")
    with tmp.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(data.n_samples):
            row = [repr(float(v)) for v in data.features[i]]
            if data.labels is not None:
                row.append(str(int(data.labels[i])))
            w.writerow(row)
    os.replace(tmp, path)


@dataclass(frozen=True)
class Normalizer:
    """Per-coordinate min-max scaling into the unit cube."""

    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self) -> None:
        lo = np.asarray(self.mins, dtype=float)
        hi = np.asarray(self.maxs, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("mins and maxs must be 1-D arrays of equal length")
        if np.any(lo > hi):
            raise ValueError("normalizer requires min <= max on every coordinate")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "mins", lo)
        object.__setattr__(self, "maxs", hi)

    @property
    def n_features(self) -> int:
        return self.mins.shape[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {x.shape[-1]}")
        span = self.maxs - self.mins
        constant = span == 0
        safe = np.where(constant, 1.0, span)
        with np.errstate(over="ignore"):  # far out-of-range values overflow to inf, then clamp
            out = np.clip((x - self.mins) / safe, 0.0, 1.0)
        # Constant coordinates carry no information; park them mid-cube.
        return np.where(constant, 0.5, out)

    def to_dict(self) -> dict:
        return {"mins": self.mins.tolist(), "maxs": self.maxs.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> Normalizer:
        return cls(np.array(doc["mins"], dtype=float), np.array(doc["maxs"], dtype=float))


def fit_normalizer(data: Dataset | np.ndarray, fit_indices: np.ndarray | None = None) -> Normalizer:
    x = data.features if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    if fit_indices is not None:
        idx = np.asarray(fit_indices, dtype=np.int64)
        if idx.size == 0:
            raise ValueError("cannot fit a normalizer on an empty index set")
        x = x[idx]
    if x.shape[0] == 0:
        raise ValueError("cannot fit a normalizer on an empty index set")
    return Normalizer(x.min(axis=0), x.max(axis=0))


@dataclass(frozen=True)
class ScenarioSplit:
    observed_normals: np.ndarray
    unlabeled: np.ndarray
    test: np.ndarray
    seed: int

    @property
    def train_pool(self) -> np.ndarray:
        return np.sort(np.concatenate([self.observed_normals, self.unlabeled]))

    def validate(self, data: Dataset) -> None:
        parts = [self.observed_normals, self.unlabeled, self.test]
        allidx = np.concatenate(parts)
        if allidx.size != data.n_samples or not np.array_equal(
            np.sort(allidx), np.arange(data.n_samples)
        ):
            raise ValueError("split must partition the dataset indices exactly")
        if data.labels is not None and np.any(data.labels[self.observed_normals] != 0):
            raise ValueError("observed normals must all carry ground-truth label 0")

    def to_dict(self) -> dict:
        return {
            "observed_normals": self.observed_normals.tolist(),
            "unlabeled": self.unlabeled.tolist(),
            "test": self.test.tolist(),
            "seed": self.seed,
        }


def split_scenario(
    data: Dataset,
    seed: int,
    train_frac: float = 0.8,
    observed_normal_frac: float = 0.2,
) -> ScenarioSplit:
    """Draw a training pool, then reveal a fraction of its normals as labeled.

    The training pool has ``round(train_frac * N)`` rows; among its true
    normals ``round(observed_normal_frac * n_normals)`` (at least one) become
    observed normals. Index arrays are returned sorted.
    """
    if data.labels is None:
        raise ValueError("split_scenario needs ground-truth labels")
    if not 0.0 < train_frac < 1.0:
        raise ValueError(f"train_frac must lie in (0, 1), got {train_frac}")
    if not 0.0 < observed_normal_frac <= 1.0:
        raise ValueError(f"observed_normal_frac must lie in (0, 1], got {observed_normal_frac}")
    rng = np.random.default_rng(seed)
    n = data.n_samples
    perm = rng.permutation(n)
    n_train = min(max(int(round(train_frac * n)), 1), n)
    train, test = perm[:n_train], perm[n_train:]
    normals = train[data.labels[train] == 0]
    if normals.size == 0:
        raise ValueError("training pool contains no normal samples")
    n_obs = min(max(int(round(observed_normal_frac * normals.size)), 1), normals.size)
    observed = rng.permutation(normals)[:n_obs]
    unlabeled = np.setdiff1d(train, observed)
    return ScenarioSplit(np.sort(observed), np.sort(unlabeled), np.sort(test), int(seed))


def generate_synthetic(
    n_normal: int,
    n_anomaly: int,
    d: int,
    seed: int,
    n_clusters: int = 3,
    spread: float = 0.03,
    margin: float = 0.25,
    max_tries: int = 1000,
    return_centers: bool = False,
) -> Dataset | tuple[Dataset, np.ndarray]:
    """Compact Gaussian clusters of normals plus uniform anomalies kept away from them.

    Cluster centers are drawn in ``[0.2, 0.8]^d``; anomalies are rejection-sampled
    on the unit cube so every anomaly sits at least ``margin`` from every center.
    """
    if n_normal < 1 or d < 1:
        raise ValueError("need n_normal >= 1 and d >= 1")
    if n_anomaly < 0:
        raise ValueError("n_anomaly must be non-negative")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.2, 0.8, size=(n_clusters, d))
    which = rng.integers(0, n_clusters, size=n_normal)
    normals = np.clip(centers[which] + rng.normal(0.0, spread, size=(n_normal, d)), 0.0, 1.0)

    anomalies = np.empty((0, d))
    tries = 0
    while anomalies.shape[0] < n_anomaly:
        if tries >= max_tries:
            raise ValueError(
                f"could not place {n_anomaly} anomalies at margin {margin} after {max_tries} rounds"
            )
        tries += 1
        cand = rng.uniform(0.0, 1.0, size=(4 * n_anomaly, d))
        dist = np.sqrt(((cand[:, None, :] - centers[None, :, :]) ** 2).sum(-1)).min(axis=1)
        anomalies = np.vstack([anomalies, cand[dist >= margin]])
    anomalies = anomalies[:n_anomaly]

    x = np.vstack([normals, anomalies])
    y = np.concatenate([np.zeros(n_normal, dtype=np.int64), np.ones(n_anomaly, dtype=np.int64)])
    order = rng.permutation(x.shape[0])
    ds = Dataset(x[order], y[order], name=f"synthetic-{seed}")
    return (ds, centers) if return_centers else ds
