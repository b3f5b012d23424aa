"""Ranking metrics: ROC AUC, precision-recall curve and best F1."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata


def _check(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError(f"scores and labels must be 1-D and equal length, got {s.shape} and {y.shape}")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    return s, y.astype(np.int64)


def auc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative (ties count half)."""
    s, y = _check(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both positive and negative labels")
    ranks = rankdata(s)  # midranks
    # Mann-Whitney U in exact arithmetic: twice the rank sum is an integer
    u2 = int(round(2 * ranks[y == 1].sum())) - n_pos * (n_pos + 1)
    return u2 / (2 * n_pos * n_neg)


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    precision: float
    recall: float
    tp: int
    fp: int


def pr_curve(scores, labels) -> list[CurvePoint]:
    """One point per distinct score, predicting positive when ``score >= threshold``.

    The curve opens with ``(+inf, precision=1, recall=0)``; thresholds then
    descend so the final point predicts everything positive.
    """
    s, y = _check(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("precision-recall needs at least one positive label")
    order = np.argsort(-s, kind="stable")
    ss, yy = s[order], y[order]
    tp = np.cumsum(yy)
    fp = np.cumsum(1 - yy)
    last = np.r_[ss[1:] != ss[:-1], True]
    points = [CurvePoint(float("inf"), 1.0, 0.0, 0, 0)]
    for i in np.flatnonzero(last):
        t, f = int(tp[i]), int(fp[i])
        points.append(CurvePoint(float(ss[i]), t / (t + f), t / n_pos, t, f))
    return points


def f1(precision: float, recall: float) -> float:
    return 0.0 if precision + recall == 0 else 2 * recall * precision / (recall + precision)


def best_f1(scores, labels) -> tuple[float, float]:
    """Largest F1 over all thresholds; ties go to the lowest threshold."""
    curve = pr_curve(scores, labels)
    n_pos = int(np.sum(labels))
    best, thr = -1.0, float("inf")
    for pt in curve:
        # 2TP / (2TP + FP + FN): one rounding, so equal F1 values compare equal
        v = 2 * pt.tp / (2 * pt.tp + pt.fp + (n_pos - pt.tp))
        if v >= best:
            best, thr = v, pt.threshold
    return best, thr


@dataclass(frozen=True)
class EvalReport:
    auc: float
    best_f1: float
    best_threshold: float
    tp: int
    fp: int
    fn: int
    tn: int
    n_samples: int
    n_positive: int
    curve: tuple[CurvePoint, ...] = ()

    def to_dict(self, with_curve: bool = False) -> dict:
        doc = {k: v for k, v in asdict(self).items() if k != "curve"}
        if with_curve:
            doc["curve"] = [
                {"threshold": p.threshold if np.isfinite(p.threshold) else None,
                 "precision": p.precision, "recall": p.recall}
                for p in self.curve
            ]
        return doc

    def write_json(self, path: str | os.PathLike) -> None:
        tmp = Path(f"{path}.tmp")
        tmp.write_text(json.dumps(self.to_dict(with_curve=True), indent=2, sort_keys=True) + "\n")
        os.replace(tmp, path)

    def write_curve_csv(self, path: str | os.PathLike) -> None:
        tmp = Path(f"{path}.tmp")
        with tmp.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["threshold", "precision", "recall", "tp", "fp"])
            for p in self.curve:
                w.writerow([repr(p.threshold), repr(p.precision), repr(p.recall), p.tp, p.fp])
        os.replace(tmp, path)


def evaluate(scores, labels) -> EvalReport:
    s, y = _check(scores, labels)
    curve = pr_curve(s, y)
    value, thr = best_f1(s, y)
    pred = s >= thr
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    return EvalReport(
        auc=auc(s, y),
        best_f1=value,
        best_threshold=thr,
        tp=tp,
        fp=fp,
        fn=int(y.sum()) - tp,
        tn=int((y == 0).sum()) - fp,
        n_samples=int(y.size),
        n_positive=int(y.sum()),
        curve=tuple(curve),
    )
