"""Weighted gradient-boosted trees with logistic loss.

Each sample's gradient and hessian are scaled by its training weight, so a
sample of weight 2 behaves exactly like two copies of weight 1. Trees grow
level by level with exact greedy splits; a leaf's value is ``-G / (H + lambda)``
and a split's gain is the usual second-order criterion

    0.5 * (G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - G^2/(H+lambda)) - gamma
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.special import expit

logger = logging.getLogger(__name__)

_TIE_TOL = 1e-10


@njit(cache=True)
def _level_splits(x, order, node_of, g, h, G, H, is_open, lam, gamma, min_child_weight, tie_tol):
    """Best split per open node, scanning each feature's presorted order once.

    Candidates are visited in (feature, threshold) order and a later one only
    wins if it beats the incumbent by more than a relative ``tie_tol``, so
    near-ties resolve to the lowest feature and the leftmost threshold.
    """
    n, d = x.shape
    n_nodes = G.shape[0]
    best_gain = np.full(n_nodes, -np.inf)
    best_feat = np.full(n_nodes, -1, dtype=np.int64)
    best_thr = np.full(n_nodes, np.nan)
    gl_acc = np.zeros(n_nodes)
    hl_acc = np.zeros(n_nodes)
    last = np.zeros(n_nodes)
    seen = np.zeros(n_nodes, dtype=np.bool_)
    parent = G * G / (H + lam)
    for f in range(d):
        gl_acc[:] = 0.0
        hl_acc[:] = 0.0
        seen[:] = False
        for t in range(n):
            i = order[f, t]
            nd = node_of[i]
            if not is_open[nd]:
                continue
            v = x[i, f]
            if seen[nd] and v > last[nd]:
                gl = gl_acc[nd]
                hl = hl_acc[nd]
                gr = G[nd] - gl
                hr = H[nd] - hl
                if hl >= min_child_weight and hr >= min_child_weight:
                    gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent[nd]) - gamma
                    b = best_gain[nd]
                    if b == -np.inf or gain > b + tie_tol * max(abs(b), 1e-300):
                        best_gain[nd] = gain
                        best_feat[nd] = f
                        best_thr[nd] = 0.5 * (last[nd] + v)
            gl_acc[nd] += g[i]
            hl_acc[nd] += h[i]
            last[nd] = v
            seen[nd] = True
    return best_gain, best_feat, best_thr


@dataclass
class _Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(x.shape[0], dtype=np.int64)
        rows = np.arange(x.shape[0])
        while True:
            inner = self.feature[node] >= 0
            if not inner.any():
                return node
            cur = node[inner]
            go_left = x[rows[inner], self.feature[cur]] < self.threshold[cur]
            node[inner] = np.where(go_left, self.left[cur], self.right[cur])

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.value[self.apply(x)]

    def to_dict(self, i: int = 0) -> dict:
        if self.feature[i] < 0:
            return {"leaf": float(self.value[i])}
        return {
            "feature": int(self.feature[i]),
            "threshold": float(self.threshold[i]),
            "left": self.to_dict(int(self.left[i])),
            "right": self.to_dict(int(self.right[i])),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> _Tree:
        feat, thr, left, right, val = [], [], [], [], []

        def visit(nd: dict) -> int:
            i = len(feat)
            feat.append(-1)
            thr.append(np.nan)
            left.append(-1)
            right.append(-1)
            val.append(0.0)
            if "leaf" in nd:
                val[i] = float(nd["leaf"])
            else:
                feat[i] = int(nd["feature"])
                thr[i] = float(nd["threshold"])
                left[i] = visit(nd["left"])
                right[i] = visit(nd["right"])
            return i

        visit(doc)
        return cls(np.array(feat, dtype=np.int64), np.array(thr), np.array(left, dtype=np.int64),
                   np.array(right, dtype=np.int64), np.array(val))


def weighted_logloss(y: np.ndarray, margin: np.ndarray, w: np.ndarray) -> float:
    # log(1 + e^m) - y*m, computed stably
    return float(np.sum(w * (np.logaddexp(0.0, margin) - y * margin)))


class Detector:
    """Binary boosted-tree classifier trained on weighted samples.

    Parameters
    ----------
    n_rounds : int
        Number of boosting rounds (trees).
    learning_rate : float
        Shrinkage applied to each tree's output.
    max_depth : int
        Maximum depth of each tree.
    reg_lambda : float
        L2 penalty on leaf values.
    gamma : float
        Penalty per additional leaf; a split must gain more than this.
    min_child_weight : float
        Minimum hessian sum in each child of a split.
    subsample : float
        Row fraction drawn (without replacement) for each tree.
    seed : int
        Seed for row subsampling.
    """

    def __init__(self, n_rounds: int = 100, learning_rate: float = 0.1, max_depth: int = 4,
                 reg_lambda: float = 1.0, gamma: float = 0.0, min_child_weight: float = 0.0,
                 subsample: float = 1.0, seed: int = 0):
        if n_rounds < 0:
            raise ValueError(f"n_rounds must be >= 0, got {n_rounds}")
        if not learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {learning_rate}")
        if max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {max_depth}")
        if reg_lambda < 0 or gamma < 0 or min_child_weight < 0:
            raise ValueError("reg_lambda, gamma and min_child_weight must be non-negative")
        if not 0.0 < subsample <= 1.0:
            raise ValueError(f"subsample must lie in (0, 1], got {subsample}")
        self.n_rounds = n_rounds
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.reg_lambda = reg_lambda
        self.gamma = gamma
        self.min_child_weight = min_child_weight
        self.subsample = subsample
        self.seed = seed
        self.base_score_: float | None = None
        self.trees_: list[_Tree] = []
        self.n_features_: int | None = None
        self.loss_trace_: list[float] = []

    def fit(self, x: np.ndarray, y: np.ndarray, sample_weight: np.ndarray | None = None) -> Detector:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim != 2 or x.shape[0] != y.shape[0]:
            raise ValueError(f"shape mismatch: x {x.shape}, y {y.shape}")
        w = np.ones_like(y) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        if w.shape != y.shape or np.any(w < 0):
            raise ValueError("sample_weight must be non-negative and match y")
        if not (np.any((y == 1) & (w > 0)) and np.any((y == 0) & (w > 0))):
            raise ValueError("training set must contain both labels with positive weight")
        n, d = x.shape
        prior = float(np.sum(w * y) / np.sum(w))
        self.base_score_ = float(np.log(prior / (1.0 - prior)))
        self.n_features_ = d
        self.trees_ = []
        order = np.argsort(x, axis=0, kind="stable").T
        margin = np.full(n, self.base_score_)
        self.loss_trace_ = [weighted_logloss(y, margin, w)]
        rng = np.random.default_rng(self.seed)
        for _ in range(self.n_rounds):
            p = expit(margin)
            g = w * (p - y)
            h = w * p * (1.0 - p)
            if self.subsample < 1.0:
                keep = np.zeros(n, dtype=bool)
                keep[rng.choice(n, size=max(1, int(round(self.subsample * n))), replace=False)] = True
                g = np.where(keep, g, 0.0)
                h = np.where(keep, h, 0.0)
            tree = self._grow(x, order, g, h)
            self.trees_.append(tree)
            margin = margin + self.learning_rate * tree.predict(x)
            self.loss_trace_.append(weighted_logloss(y, margin, w))
        logger.debug("trained %d trees, final loss %.6g", len(self.trees_), self.loss_trace_[-1])
        return self

    def _grow(self, x: np.ndarray, order: np.ndarray, g: np.ndarray, h: np.ndarray) -> _Tree:
        lam = self.reg_lambda
        feat, thr, left, right = [-1], [np.nan], [-1], [-1]
        node_of = np.zeros(x.shape[0], dtype=np.int64)
        frontier = [0]
        for _ in range(self.max_depth):
            n_nodes = len(feat)
            G = np.bincount(node_of, weights=g, minlength=n_nodes)
            H = np.bincount(node_of, weights=h, minlength=n_nodes)
            is_open = np.zeros(n_nodes, dtype=np.bool_)
            is_open[frontier] = True
            best_gain, best_feat, best_thr = _level_splits(
                x, order, node_of, g, h, G, H, is_open,
                lam, self.gamma, self.min_child_weight, _TIE_TOL,
            )
            new_frontier = []
            for node in frontier:
                if best_feat[node] < 0 or not best_gain[node] > 0.0:
                    continue
                li, ri = len(feat), len(feat) + 1
                feat[node], thr[node] = int(best_feat[node]), float(best_thr[node])
                left[node], right[node] = li, ri
                feat += [-1, -1]
                thr += [np.nan, np.nan]
                left += [-1, -1]
                right += [-1, -1]
                members = node_of == node
                go_left = x[:, feat[node]] < thr[node]
                node_of[members & go_left] = li
                node_of[members & ~go_left] = ri
                new_frontier += [li, ri]
            if not new_frontier:
                break
            frontier = new_frontier
        n_nodes = len(feat)
        G = np.bincount(node_of, weights=g, minlength=n_nodes)
        H = np.bincount(node_of, weights=h, minlength=n_nodes)
        value = np.where(np.array(feat) < 0, -G / (H + lam), 0.0)
        return _Tree(np.array(feat, dtype=np.int64), np.array(thr), np.array(left, dtype=np.int64),
                     np.array(right, dtype=np.int64), value)

    def _check(self, x: np.ndarray) -> np.ndarray:
        if self.base_score_ is None:
            raise RuntimeError("detector is not trained")
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.n_features_:
            raise ValueError(f"expected {self.n_features_} features, got {x.shape[1]}")
        return x

    def decision_function(self, x: np.ndarray) -> np.ndarray:
        x = self._check(x)
        margin = np.full(x.shape[0], self.base_score_)
        for tree in self.trees_:
            margin += self.learning_rate * tree.predict(x)
        return margin

    def predict_score(self, x: np.ndarray) -> np.ndarray:
        """Anomaly probability; higher means more anomalous."""
        return expit(self.decision_function(x))

    def classify(self, x: np.ndarray, threshold: float = 0.5) -> np.ndarray:
        if not 0.0 < threshold < 1.0:
            raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
        return (self.predict_score(x) >= threshold).astype(np.int64)

    def params(self) -> dict:
        return {
            "n_rounds": self.n_rounds,
            "learning_rate": self.learning_rate,
            "max_depth": self.max_depth,
            "reg_lambda": self.reg_lambda,
            "gamma": self.gamma,
            "min_child_weight": self.min_child_weight,
            "subsample": self.subsample,
            "seed": self.seed,
        }

    def to_dict(self) -> dict:
        return {
            "params": self.params(),
            "base_score": self.base_score_,
            "n_features": self.n_features_,
            "trees": [t.to_dict() for t in self.trees_],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> Detector:
        det = cls(**doc["params"])
        det.base_score_ = float(doc["base_score"])
        det.n_features_ = int(doc["n_features"])
        det.trees_ = [_Tree.from_dict(t) for t in doc["trees"]]
        return det


def train_detector(x, y, weights=None, **params) -> Detector:
    return Detector(**params).fit(x, y, weights)
