"""Score fusion, potential-anomaly selection and training weights."""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

OBSERVED_NORMAL = "observed_normal"
SELECTED_ANOMALY = "selected_anomaly"


def minmax(v: np.ndarray) -> np.ndarray:
    """Rescale to [0, 1]; a constant vector maps to 0.5."""
    v = np.asarray(v, dtype=float)
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.full_like(v, 0.5)
    return (v - lo) / (hi - lo)


@dataclass(frozen=True)
class ScoreTable:
    """Per-sample scores over the unlabeled set, aligned with ``index``."""

    index: np.ndarray
    lss_raw: np.ndarray
    lss_norm: np.ndarray
    gns: np.ndarray
    galscore_norm: np.ndarray
    mu: float

    def __len__(self) -> int:
        return self.index.shape[0]

    def write_csv(self, path: str | os.PathLike, selected=None, weights=None) -> None:
        """Diagnostics export; ``weights`` maps sample index to training weight."""
        sel = set(int(i) for i in (selected if selected is not None else ()))
        wmap = weights or {}
        tmp = Path(f"{path}.tmp")
        with tmp.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "lss_raw", "lss_norm", "gns", "galscore_norm", "selected", "weight"])
            for r in range(len(self)):
                i = int(self.index[r])
                w.writerow([
                    i,
                    repr(float(self.lss_raw[r])),
                    repr(float(self.lss_norm[r])),
                    repr(float(self.gns[r])),
                    repr(float(self.galscore_norm[r])),
                    int(i in sel),
                    repr(float(wmap[i])) if i in wmap else "",
                ])
        os.replace(tmp, path)


def galscore(lss_scores, gns_scores, mu: float = 1.0, index=None) -> ScoreTable:
    """Fuse sparsity and normality: ``minmax(minmax(lss) - mu * gns)``.

    The sparsity score is min-max scaled before fusion so ``mu`` trades off
    two quantities on the same [0, 1] footing.
    """
    lss_raw = np.asarray(lss_scores, dtype=float)
    g = np.asarray(gns_scores, dtype=float)
    if lss_raw.shape != g.shape or lss_raw.ndim != 1:
        raise ValueError(f"score vectors must be 1-D and equal length, got {lss_raw.shape} and {g.shape}")
    if lss_raw.size == 0:
        raise ValueError("no samples to score")
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    idx = np.arange(lss_raw.size) if index is None else np.asarray(index, dtype=np.int64)
    if idx.shape != lss_raw.shape:
        raise ValueError("index length does not match scores")
    lss_norm = minmax(lss_raw)
    combined = lss_norm - mu * g
    return ScoreTable(idx, lss_raw, lss_norm, g, minmax(combined), float(mu))


def select_potential_anomalies(table: ScoreTable, delta: float = 0.05) -> np.ndarray:
    """Sample indices of the ``ceil(delta * n)`` highest fused scores.

    Ties at the cutoff go to the lower sample index.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    n = len(table)
    if n == 0:
        raise ValueError("no unlabeled samples to select from")
    # round off float noise first: 0.1 * 30 must give 3, not 4
    n_sel = math.ceil(round(delta * n, 9))
    order = np.lexsort((table.index, -table.galscore_norm))
    return table.index[order[:n_sel]]


@dataclass(frozen=True)
class WeightedTrainingSet:
    index: np.ndarray
    labels: np.ndarray
    weights: np.ndarray
    provenance: tuple[str, ...]

    def __len__(self) -> int:
        return self.index.shape[0]

    @property
    def n_selected(self) -> int:
        return int(self.labels.sum())


def assign_weights(table: ScoreTable, selected, observed_normals, epsilon: float = 0.5) -> WeightedTrainingSet:
    """Observed normals get weight ``epsilon``; selected samples get their
    fused score divided by the largest fused score among the selected.

    A selected sample whose fused score is exactly 0 would get weight 0 and
    is left out of the training set instead.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    sel = np.asarray(selected, dtype=np.int64)
    obs = np.asarray(observed_normals, dtype=np.int64)
    if sel.size == 0:
        raise ValueError("no potential anomalies selected")
    pos = {int(i): r for r, i in enumerate(table.index)}
    try:
        scores = table.galscore_norm[[pos[int(i)] for i in sel]]
    except KeyError as exc:
        raise ValueError(f"selected index {exc.args[0]} not in the score table") from None
    top = scores.max()
    if top <= 0.0:
        raise ValueError(
            "all selected samples have zero fused score; the data are degenerate, "
            "revisit delta and mu"
        )
    keep = scores > 0.0
    if not keep.all():
        # only possible when the cutoff reaches into a tie at the minimum score
        logger.warning("dropping %d selected samples with zero fused score", int((~keep).sum()))
        sel, scores = sel[keep], scores[keep]
    w = np.concatenate([np.full(obs.size, float(epsilon)), scores / top])
    y = np.concatenate([np.zeros(obs.size, dtype=np.int64), np.ones(sel.size, dtype=np.int64)])
    prov = (OBSERVED_NORMAL,) * obs.size + (SELECTED_ANOMALY,) * sel.size
    return WeightedTrainingSet(np.concatenate([obs, sel]), y, w, prov)
