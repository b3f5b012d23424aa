"""Normal-pattern model: k-means over observed normals and the global normal score."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ClusterModel:
    """Fitted cluster centers.

    ``objective`` is the sum of (unsquared) Euclidean distances from each
    training normal to its nearest center. ``sq_trace`` records the
    squared-distance objective after every assignment step, the quantity
    Lloyd's iterations actually minimise.
    """

    centers: np.ndarray
    objective: float
    n_iter: int
    sq_trace: tuple[float, ...] = field(default=())

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    def nearest_distance(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.centers.shape[1]:
            raise ValueError(f"expected {self.centers.shape[1]} features, got {x.shape[1]}")
        return np.sqrt(_sq_dist(x, self.centers).min(axis=1))

    def to_dict(self) -> dict:
        return {
            "centers": self.centers.tolist(),
            "objective": self.objective,
            "n_iter": self.n_iter,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> ClusterModel:
        return cls(np.array(doc["centers"], dtype=float), float(doc["objective"]), int(doc["n_iter"]))


def _sq_dist(x: np.ndarray, c: np.ndarray, chunk: int = 1 << 20) -> np.ndarray:
    # direct differences: the expanded dot-product form loses exact zeros
    out = np.empty((x.shape[0], c.shape[0]))
    step = max(1, chunk // max(1, c.size))
    for s in range(0, x.shape[0], step):
        diff = x[s : s + step, None, :] - c[None, :, :]
        out[s : s + step] = (diff * diff).sum(axis=2)
    return out


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    closest = _sq_dist(x, centers[0][None, :])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # all remaining points coincide with chosen centers
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=closest / total)
        centers.append(x[idx])
        closest = np.minimum(closest, _sq_dist(x, x[idx][None, :])[:, 0])
    return np.array(centers)


def fit_kmeans(
    normals: np.ndarray,
    k: int = 5,
    seed: int = 0,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> ClusterModel:
    """Lloyd's algorithm from a k-means++ start.

    Stops once no center moves more than ``tol`` or after ``max_iter``
    iterations. A cluster that loses all its points is re-seeded at the
    point currently farthest from its assigned center.
    """
    x = np.atleast_2d(np.asarray(normals, dtype=float))
    n = x.shape[0]
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if n < k:
        raise ValueError(f"need at least k={k} normals to cluster, got {n}")
    rng = np.random.default_rng(seed)
    centers = _kmeanspp(x, k, rng)
    trace: list[float] = []
    it = 0
    for it in range(1, max_iter + 1):
        d2 = _sq_dist(x, centers)
        assign = d2.argmin(axis=1)
        trace.append(float(d2[np.arange(n), assign].sum()))
        new = np.empty_like(centers)
        taken: set[int] = set()
        for c in range(k):
            members = assign == c
            if members.any():
                pts = x[members]
                # shifted mean: exact when all members coincide
                new[c] = pts[0] + (pts - pts[0]).mean(axis=0)
            else:
                far = d2[np.arange(n), assign]
                for i in np.argsort(-far, kind="stable"):
                    if int(i) not in taken:
                        break
                taken.add(int(i))
                new[c] = x[i]
        shift = np.sqrt(((new - centers) ** 2).sum(axis=1)).max()
        centers = new
        if shift < tol:
            break
    d = np.sqrt(_sq_dist(x, centers).min(axis=1))
    return ClusterModel(centers, float(d.sum()), it, tuple(trace))


def kmeans_objective(model: ClusterModel, points: np.ndarray) -> float:
    return float(model.nearest_distance(points).sum())


def gns(model: ClusterModel, x: np.ndarray) -> np.ndarray:
    """Global normal score ``exp(-d**2)``, d = distance to the nearest center."""
    d = model.nearest_distance(x)
    return np.exp(-(d**2))
