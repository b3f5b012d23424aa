"""Three-stage detection pipeline and the persisted model document.

Stage one scores the unlabeled pool with the sparsity forest (local) and the
normal-pattern clusters (global). Stage two fuses the scores, picks the top
``delta`` fraction as potential anomalies and weights them. Stage three fits
the weighted boosted-tree detector, which then scores unseen rows.

Every fitted component only sees training-pool rows; the test partition is
touched once, at final scoring.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Dataset, Normalizer, ScenarioSplit, fit_normalizer
from .detector import Detector
from .eval import EvalReport, evaluate
from .normal_model import ClusterModel, fit_kmeans, gns
from .scoring import ScoreTable, WeightedTrainingSet, assign_weights, galscore, select_potential_anomalies
from .sparsity_forest import SparsityForest

logger = logging.getLogger(__name__)

MODEL_FORMAT = "galdetector-model"
MODEL_VERSION = 1

STAGES = ("normalize", "forest", "clusters", "fusion", "detector", "evaluate")


class ConfigError(ValueError):
    pass


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass(frozen=True)
class PipelineConfig:
    # sparsity forest
    trees: int = 50
    p: int = 5
    forest_depth: int = 10
    n_sub: int | None = None
    aggregation: str = "mean"
    # normal patterns
    k: int = 5
    max_iter: int = 100
    tol: float = 1e-6
    # fusion and selection
    mu: float = 1.0
    delta: float = 0.05
    epsilon: float = 0.5
    # detector
    rounds: int = 100
    eta: float = 0.1
    detector_depth: int = 4
    reg_lambda: float = 1.0
    gamma: float = 0.0
    # scenario
    train_frac: float = 0.8
    observed_normal_frac: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("trees", "p", "forest_depth", "k", "max_iter", "rounds", "detector_depth"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.p < 2:
            raise ConfigError(f"p must be >= 2, got {self.p}")
        if self.n_sub is not None and self.n_sub < 1:
            raise ConfigError(f"n_sub must be >= 1, got {self.n_sub}")
        if self.aggregation not in ("mean", "max"):
            raise ConfigError(f"aggregation must be 'mean' or 'max', got {self.aggregation!r}")
        for name in ("delta", "train_frac"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {getattr(self, name)}")
        if not 0.0 < self.observed_normal_frac <= 1.0:
            raise ConfigError(f"observed_normal_frac must lie in (0, 1], got {self.observed_normal_frac}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if not self.mu > 0:
            raise ConfigError(f"mu must be positive, got {self.mu}")
        if not self.eta > 0 or self.tol <= 0 or self.reg_lambda < 0 or self.gamma < 0:
            raise ConfigError("eta and tol must be positive; reg_lambda and gamma non-negative")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> PipelineConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def with_overrides(self, **kw) -> PipelineConfig:
        kw = {k: v for k, v in kw.items() if v is not None}
        return self.from_dict({**self.to_dict(), **kw})

    def stage_seeds(self) -> dict[str, int]:
        forest, clusters, detector = np.random.SeedSequence(self.seed).generate_state(3)
        return {"forest": int(forest), "clusters": int(clusters), "detector": int(detector)}


@dataclass
class GALModel:
    """Everything needed to score new rows, plus the fusion context."""

    config: PipelineConfig
    normalizer: Normalizer
    forest: SparsityForest
    clusters: ClusterModel
    detector: Detector
    lss_range: tuple[float, float]
    n_selected: int

    @property
    def n_features(self) -> int:
        return self.normalizer.n_features

    def predict_score(self, x: np.ndarray) -> np.ndarray:
        return self.detector.predict_score(self.normalizer.apply(x))

    def classify(self, x: np.ndarray, threshold: float = 0.5) -> np.ndarray:
        return self.detector.classify(self.normalizer.apply(x), threshold)

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "config": self.config.to_dict(),
            "normalizer": self.normalizer.to_dict(),
            "forest": self.forest.to_dict(),
            "clusters": self.clusters.to_dict(),
            "fusion": {
                "mu": self.config.mu,
                "delta": self.config.delta,
                "epsilon": self.config.epsilon,
                "lss_min": self.lss_range[0],
                "lss_max": self.lss_range[1],
                "n_selected": self.n_selected,
            },
            "detector": self.detector.to_dict(),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def save(self, path: str | os.PathLike) -> None:
        atomic_write(path, self.dumps())

    @classmethod
    def from_dict(cls, doc: dict) -> GALModel:
        if doc.get("format") != MODEL_FORMAT:
            raise ValueError("not a model document")
        if doc.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {doc.get('version')!r}")
        fusion = doc["fusion"]
        return cls(
            config=PipelineConfig.from_dict(doc["config"]),
            normalizer=Normalizer.from_dict(doc["normalizer"]),
            forest=SparsityForest.from_dict(doc["forest"]),
            clusters=ClusterModel.from_dict(doc["clusters"]),
            detector=Detector.from_dict(doc["detector"]),
            lss_range=(float(fusion["lss_min"]), float(fusion["lss_max"])),
            n_selected=int(fusion["n_selected"]),
        )

    @classmethod
    def load(cls, path: str | os.PathLike) -> GALModel:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def atomic_write(path: str | os.PathLike, text: str) -> None:
    tmp = Path(f"{path}.tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


@dataclass
class PipelineResult:
    model: GALModel
    split: ScenarioSplit
    scores: ScoreTable
    selected: np.ndarray
    training_set: WeightedTrainingSet
    test_scores: np.ndarray
    report: EvalReport | None
    timings: dict[str, float] = field(default_factory=dict)

    def summary(self) -> dict:
        """Deterministic run summary (no wall-clock values)."""
        doc = {
            "config": self.model.config.to_dict(),
            "split": {
                "seed": self.split.seed,
                "observed_normals": int(self.split.observed_normals.size),
                "unlabeled": int(self.split.unlabeled.size),
                "test": int(self.split.test.size),
            },
            "n_selected": int(self.selected.size),
            "stages": list(STAGES),
        }
        if self.report is not None:
            doc["test"] = self.report.to_dict()
        return doc


def run_pipeline(data: Dataset, split: ScenarioSplit, config: PipelineConfig | None = None) -> PipelineResult:
    cfg = config or PipelineConfig()
    try:
        split.validate(data)
    except ValueError as exc:
        raise PipelineError("split", str(exc)) from None
    seeds = cfg.stage_seeds()
    timings: dict[str, float] = {}
    x = data.features
    pool = split.train_pool
    obs, unl = split.observed_normals, split.unlabeled

    def stage(name):
        return _Stage(name, timings)

    with stage("normalize"):
        normalizer = fit_normalizer(x, pool)
        xn_pool = normalizer.apply(x[pool])
        xn_obs = normalizer.apply(x[obs])
        xn_unl = normalizer.apply(x[unl])
    with stage("forest"):
        if unl.size == 0:
            raise ValueError("unlabeled set is empty; nothing to mine potential anomalies from")
        forest = SparsityForest(cfg.trees, cfg.p, cfg.forest_depth, cfg.n_sub, cfg.aggregation,
                                seeds["forest"]).fit(xn_pool)
        lss_unl = forest.score(xn_unl)
    with stage("clusters"):
        clusters = fit_kmeans(xn_obs, cfg.k, seeds["clusters"], cfg.max_iter, cfg.tol)
        gns_unl = gns(clusters, xn_unl)
    with stage("fusion"):
        table = galscore(lss_unl, gns_unl, cfg.mu, index=unl)
        selected = select_potential_anomalies(table, cfg.delta)
        train_set = assign_weights(table, selected, obs, cfg.epsilon)
    with stage("detector"):
        detector = Detector(cfg.rounds, cfg.eta, cfg.detector_depth, cfg.reg_lambda, cfg.gamma,
                            seed=seeds["detector"])
        detector.fit(normalizer.apply(x[train_set.index]), train_set.labels, train_set.weights)
    model = GALModel(cfg, normalizer, forest, clusters, detector,
                     (float(lss_unl.min()), float(lss_unl.max())), int(selected.size))
    report = None
    test_scores = np.empty(0)
    with stage("evaluate"):
        if split.test.size:
            test_scores = model.predict_score(x[split.test])
            y_test = None if data.labels is None else data.labels[split.test]
            if y_test is not None and 0 < y_test.sum() < y_test.size:
                report = evaluate(test_scores, y_test)
    logger.info(
        "pipeline done: %d observed normals, %d unlabeled, %d selected, test=%d%s",
        obs.size, unl.size, selected.size, split.test.size,
        "" if report is None else f", AUC={report.auc:.4f}",
    )
    return PipelineResult(model, split, table, selected, train_set, test_scores, report, timings)


class _Stage:
    def __init__(self, name: str, timings: dict[str, float]):
        self.name = name
        self.timings = timings

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.timings[self.name] = time.perf_counter() - self.t0
        if exc_type is not None and not isinstance(exc, PipelineError) and issubclass(exc_type, Exception):
            raise PipelineError(self.name, str(exc)) from exc
        return False
