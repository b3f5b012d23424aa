"""Sparsity forest: axis-aligned partition trees scored by subcube sparsity.

Each tree recursively cuts the unit cube along one coordinate into at most
``p`` intervals, choosing the coordinate and breakpoints that maximise the
variance of point density across the pieces. A leaf stores its volume and
the number of subsample points inside it; its sparsity is ``volume / count``.
The local sparsity score of a point aggregates the sparsity of the leaves
containing it over all trees.

The per-coordinate split is an optimal histogram problem. Writing ``c_i`` and
``len_i`` for the count and length of piece ``i`` on an interval of length
``L`` holding ``n`` points, the density variance

    sum_i (len_i / L) * (c_i / len_i - n / L) ** 2  =  (1/L) sum_i c_i**2 / len_i - (n/L)**2

so maximising it means maximising ``sum_i c_i**2 / len_i``, solved exactly
by dynamic programming over the gaps between distinct values.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


class SplitResult(NamedTuple):
    coordinate: int
    breakpoints: tuple[float, ...]
    score: float
    relative_score: float


@njit(cache=True)
def _segment_value(prefix, bounds, a, b):
    c = prefix[b] - prefix[a]
    return c * c / (bounds[b] - bounds[a])


@njit(cache=True)
def _split_dp(values, counts, lo, hi, p):
    """Lexicographically-first optimal segmentation of [lo, hi].

    Returns (best sum of c^2/len, boundary indices of the chosen breakpoints).
    Breakpoint t sits halfway between distinct values t-1 and t.
    """
    m = values.shape[0]
    bounds = np.empty(m + 1)
    bounds[0] = lo
    bounds[m] = hi
    for t in range(1, m):
        bounds[t] = 0.5 * (values[t - 1] + values[t])
    prefix = np.zeros(m + 1)
    for t in range(m):
        prefix[t + 1] = prefix[t] + counts[t]

    k_max = min(p, m)
    # best[r, a]: max over partitions of [bounds[a], hi] into 1..r pieces
    best = np.full((k_max + 1, m + 1), -np.inf)
    for a in range(m):
        best[1, a] = _segment_value(prefix, bounds, a, m)
    for r in range(2, k_max + 1):
        for a in range(m):
            v = best[1, a]
            for b in range(a + 1, m):
                cand = _segment_value(prefix, bounds, a, b) + best[r - 1, b]
                if cand > v:
                    v = cand
            best[r, a] = v

    # At least one breakpoint is mandatory.
    target = -np.inf
    for b in range(1, m):
        cand = _segment_value(prefix, bounds, 0, b) + best[k_max - 1, b]
        if cand > target:
            target = cand

    chosen = np.empty(k_max - 1, dtype=np.int64)
    n_chosen = 0
    a = 0
    r = k_max
    need = target
    first = True
    while True:
        tol = 1e-12 * max(abs(target), 1e-300)
        if not first and _segment_value(prefix, bounds, a, m) >= need - tol:
            break
        if r == 1:
            break
        picked = -1
        for b in range(a + 1, m):
            rest = best[r - 1, b]
            cand = _segment_value(prefix, bounds, a, b) + rest
            if cand >= need - tol:
                picked = b
                break
        if picked < 0:
            break
        need -= _segment_value(prefix, bounds, a, picked)
        chosen[n_chosen] = picked
        n_chosen += 1
        a = picked
        r -= 1
        first = False
    return target, bounds, chosen[:n_chosen]


@njit(cache=True)
def _distinct(sorted_vals):
    n = sorted_vals.shape[0]
    vals = np.empty(n)
    cnts = np.empty(n)
    m = 0
    for i in range(n):
        if m > 0 and sorted_vals[i] == vals[m - 1]:
            cnts[m - 1] += 1.0
        else:
            vals[m] = sorted_vals[i]
            cnts[m] = 1.0
            m += 1
    return vals[:m], cnts[:m]


@njit(cache=True)
def _best_over_coordinates(sorted_cols, lo, hi, p):
    """Pick the coordinate whose optimal split has the largest relative variance.

    ``sorted_cols`` holds each coordinate's node values sorted ascending (one
    column per coordinate). Returns (coord, relative score, breakpoints);
    coord is -1 when no coordinate has two distinct values.
    """
    n, d = sorted_cols.shape
    best_coord = -1
    best_rel = -np.inf
    best_bps = np.empty(0)
    for j in range(d):
        col = sorted_cols[:, j]
        if col[0] == col[n - 1]:
            continue
        vals, cnts = _distinct(col)
        total, bounds, idx = _split_dp(vals, cnts, lo[j], hi[j], p)
        length = hi[j] - lo[j]
        # variance / mean_density**2, comparable across coordinates
        rel = length * total / (n * n) - 1.0
        if best_coord < 0 or rel > best_rel + 1e-12 * max(abs(best_rel), 1e-300):
            best_coord = j
            best_rel = rel
            best_bps = bounds[idx]
    return best_coord, best_rel, best_bps


def split_objective(positions, breakpoints, lo: float, hi: float) -> float:
    """Length-weighted variance of density across the pieces cut by ``breakpoints``."""
    pos = np.asarray(positions, dtype=float)
    edges = np.concatenate([[lo], np.asarray(breakpoints, dtype=float), [hi]])
    lengths = np.diff(edges)
    counts = np.bincount(np.searchsorted(breakpoints, pos, side="right"), minlength=len(lengths))
    total_len = hi - lo
    mean_density = pos.size / total_len
    return float(np.sum(lengths / total_len * (counts / lengths - mean_density) ** 2))


def best_split_1d(positions, lo: float, hi: float, p: int, coordinate: int = 0) -> SplitResult:
    """Optimal split of ``[lo, hi]`` into at most ``p`` pieces.

    Breakpoints are midpoints between adjacent distinct positions. Among
    splits with equal objective the lexicographically smallest breakpoint
    tuple wins, so fewer breakpoints beat a longer tuple with the same prefix.
    """
    pos = np.sort(np.asarray(positions, dtype=float))
    if p < 2:
        raise ValueError(f"p must be at least 2, got {p}")
    if pos.size < 2 or pos[0] == pos[-1]:
        raise ValueError("need at least two distinct positions to split")
    if pos[0] < lo or pos[-1] > hi or not lo < hi:
        raise ValueError("positions must lie inside a non-degenerate [lo, hi]")
    vals, cnts = _distinct(pos)
    total, bounds, idx = _split_dp(vals, cnts, float(lo), float(hi), int(p))
    length = hi - lo
    n = pos.size
    mean_density = n / length
    score = total / length - mean_density**2
    return SplitResult(
        coordinate,
        tuple(float(b) for b in bounds[idx]),
        float(score),
        float(length * total / (n * n) - 1.0),
    )


def cube_sparsity(volume: float, count: int) -> float:
    """Volume per contained sample point; empty cubes count as holding one."""
    return float(volume) / max(int(count), 1)


@dataclass(frozen=True)
class TreeConfig:
    p: int = 5
    max_depth: int = 10
    n_sub: int = 200

    def __post_init__(self) -> None:
        if self.p < 2:
            raise ValueError(f"p must be >= 2, got {self.p}")
        if self.max_depth < 0:
            raise ValueError(f"max_depth must be >= 0, got {self.max_depth}")
        if self.n_sub < 1:
            raise ValueError(f"n_sub must be >= 1, got {self.n_sub}")


class SparsityTree:
    """Flat-array partition tree.

    Node ``i`` is internal when ``coord[i] >= 0``; its children occupy
    ``first_child[i] : first_child[i] + n_children[i]`` and
    ``breakpoints[i, :n_children[i] - 1]`` separates them (padding is +inf).
    A point equal to a breakpoint belongs to the piece on its right.
    """

    def __init__(self, coord, breakpoints, first_child, n_children, depth, count, lo, hi):
        self.coord = np.asarray(coord, dtype=np.int64)
        self.breakpoints = np.asarray(breakpoints, dtype=float)
        self.first_child = np.asarray(first_child, dtype=np.int64)
        self.n_children = np.asarray(n_children, dtype=np.int64)
        self.depth = np.asarray(depth, dtype=np.int64)
        self.count = np.asarray(count, dtype=np.int64)
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        self.volume = np.prod(self.hi - self.lo, axis=1)
        self.sparsity = self.volume / np.maximum(self.count, 1)

    @property
    def n_nodes(self) -> int:
        return self.coord.shape[0]

    @property
    def is_leaf(self) -> np.ndarray:
        return self.coord < 0

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Leaf index of every row of ``x`` (points in the unit cube)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        node = np.zeros(x.shape[0], dtype=np.int64)
        rows = np.arange(x.shape[0])
        for _ in range(self.max_depth):
            active = self.coord[node] >= 0
            if not active.any():
                break
            cur = node[active]
            vals = x[rows[active], self.coord[cur]]
            offset = (vals[:, None] >= self.breakpoints[cur]).sum(axis=1)
            node[active] = self.first_child[cur] + offset
        return node

    def leaf_sparsity(self, x: np.ndarray) -> np.ndarray:
        return self.sparsity[self.apply(x)]

    def to_dict(self) -> dict:
        nodes = []
        for i in range(self.n_nodes):
            node: dict = {"depth": int(self.depth[i]), "count": int(self.count[i])}
            if self.coord[i] >= 0:
                k = int(self.n_children[i])
                node["coord"] = int(self.coord[i])
                node["breakpoints"] = self.breakpoints[i, : k - 1].tolist()
                node["first_child"] = int(self.first_child[i])
            else:
                tracked = np.flatnonzero((self.lo[i] != 0.0) | (self.hi[i] != 1.0))
                node["cube"] = {str(j): [float(self.lo[i, j]), float(self.hi[i, j])] for j in tracked}
                node["volume"] = float(self.volume[i])
                node["sparsity"] = float(self.sparsity[i])
            nodes.append(node)
        return {"nodes": nodes}

    @classmethod
    def from_dict(cls, doc: dict, d: int, p: int) -> SparsityTree:
        nodes = doc["nodes"]
        n = len(nodes)
        coord = np.full(n, -1, dtype=np.int64)
        bps = np.full((n, p - 1), np.inf)
        first = np.zeros(n, dtype=np.int64)
        nch = np.zeros(n, dtype=np.int64)
        depth = np.array([nd["depth"] for nd in nodes], dtype=np.int64)
        count = np.array([nd["count"] for nd in nodes], dtype=np.int64)
        lo = np.zeros((n, d))
        hi = np.ones((n, d))
        for i, nd in enumerate(nodes):
            if "coord" in nd:
                b = nd["breakpoints"]
                coord[i] = nd["coord"]
                bps[i, : len(b)] = b
                first[i] = nd["first_child"]
                nch[i] = len(b) + 1
        # Cubes are implied by the topology; rebuild them top-down.
        for i in range(n):
            if coord[i] >= 0:
                j = coord[i]
                edges = [lo[i, j], *bps[i, : nch[i] - 1], hi[i, j]]
                for c in range(nch[i]):
                    ch = first[i] + c
                    lo[ch] = lo[i]
                    hi[ch] = hi[i]
                    lo[ch, j] = edges[c]
                    hi[ch, j] = edges[c + 1]
        return cls(coord, bps, first, nch, depth, count, lo, hi)


def build_tree(sample: np.ndarray, config: TreeConfig) -> SparsityTree:
    """Grow one partition tree on ``sample`` (rows in the unit cube).

    Nodes split while they hold more than one point, sit above
    ``config.max_depth`` and have a coordinate with two distinct values.
    """
    s = np.atleast_2d(np.asarray(sample, dtype=float))
    n, d = s.shape
    if n < 1:
        raise ValueError("cannot build a tree on an empty sample")
    p = config.p
    coord: list[int] = []
    bps: list[np.ndarray] = []
    first: list[int] = []
    nch: list[int] = []
    depth: list[int] = []
    count: list[int] = []
    los: list[np.ndarray] = []
    his: list[np.ndarray] = []

    def add(members, lo_, hi_, dep):
        coord.append(-1)
        bps.append(np.full(p - 1, np.inf))
        first.append(0)
        nch.append(0)
        depth.append(dep)
        count.append(members.size)
        los.append(lo_)
        his.append(hi_)
        return len(coord) - 1

    queue = deque([(add(np.arange(n), np.zeros(d), np.ones(d), 0), np.arange(n))])
    while queue:
        node, members = queue.popleft()
        if members.size <= 1 or depth[node] >= config.max_depth:
            continue
        pts = s[members]
        j, _, cuts = _best_over_coordinates(np.sort(pts, axis=0), los[node], his[node], p)
        if j < 0:
            continue
        coord[node] = int(j)
        bps[node][: cuts.size] = cuts
        nch[node] = cuts.size + 1
        first[node] = len(coord)
        piece = np.searchsorted(cuts, pts[:, j], side="right")
        edges = np.concatenate([[los[node][j]], cuts, [his[node][j]]])
        for c in range(cuts.size + 1):
            lo_c = los[node].copy()
            hi_c = his[node].copy()
            lo_c[j], hi_c[j] = edges[c], edges[c + 1]
            sub = members[piece == c]
            child = add(sub, lo_c, hi_c, depth[node] + 1)
            queue.append((child, sub))

    return SparsityTree(
        coord, np.array(bps).reshape(len(coord), p - 1), first, nch, depth, count,
        np.array(los), np.array(his),
    )


class SparsityForest:
    """Ensemble of sparsity trees, each grown on its own uniform subsample.

    Parameters
    ----------
    n_trees : int
        Number of trees.
    p : int
        Maximum number of pieces per split.
    max_depth : int
        Maximum tree depth.
    n_sub : int or None
        Subsample size per tree; ``None`` means ``min(N, 200)``.
    aggregation : {"mean", "max"}
        How leaf sparsities are combined across trees.
    seed : int
        Master seed; each tree gets an independent child stream.
    """

    def __init__(self, n_trees: int = 50, p: int = 5, max_depth: int = 10,
                 n_sub: int | None = None, aggregation: str = "mean", seed: int = 0):
        if n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {n_trees}")
        if aggregation not in ("mean", "max"):
            raise ValueError(f"aggregation must be 'mean' or 'max', got {aggregation!r}")
        if n_sub is not None and n_sub < 1:
            raise ValueError(f"n_sub must be >= 1, got {n_sub}")
        self.n_trees = n_trees
        self.p = p
        self.max_depth = max_depth
        self.n_sub = n_sub
        self.aggregation = aggregation
        self.seed = seed
        self.trees: list[SparsityTree] = []
        self.n_features_: int | None = None
        self.n_sub_: int | None = None

    def fit(self, x: np.ndarray) -> SparsityForest:
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[0] < 1:
            raise ValueError(f"expected a non-empty 2-D array, got shape {x.shape}")
        if x.min() < 0.0 or x.max() > 1.0:
            raise ValueError("forest input must be normalized into [0, 1]")
        n, d = x.shape
        n_sub = min(n, self.n_sub if self.n_sub is not None else 200)
        cfg = TreeConfig(self.p, self.max_depth, n_sub)
        streams = np.random.SeedSequence(self.seed).spawn(self.n_trees)
        self.trees = []
        for ss in streams:
            rng = np.random.default_rng(ss)
            idx = rng.choice(n, size=n_sub, replace=False)
            self.trees.append(build_tree(x[idx], cfg))
        self.n_features_ = d
        self.n_sub_ = n_sub
        logger.debug("built %d sparsity trees, n_sub=%d, d=%d", self.n_trees, n_sub, d)
        return self

    def leaf_sparsities(self, x: np.ndarray) -> np.ndarray:
        """Per-tree leaf sparsity, shape ``(n_samples, n_trees)``."""
        if not self.trees:
            raise RuntimeError("forest is not fitted")
        x = np.clip(np.atleast_2d(np.asarray(x, dtype=float)), 0.0, 1.0)
        if x.shape[1] != self.n_features_:
            raise ValueError(f"expected {self.n_features_} features, got {x.shape[1]}")
        return np.column_stack([t.leaf_sparsity(x) for t in self.trees])

    def score(self, x: np.ndarray) -> np.ndarray:
        """Local sparsity score for each row of ``x``."""
        rho = self.leaf_sparsities(x)
        return rho.mean(axis=1) if self.aggregation == "mean" else rho.max(axis=1)

    def to_dict(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "config": {
                "n_trees": self.n_trees,
                "p": self.p,
                "max_depth": self.max_depth,
                "n_sub": self.n_sub,
                "aggregation": self.aggregation,
                "seed": self.seed,
            },
            "n_features": self.n_features_,
            "n_sub_effective": self.n_sub_,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> SparsityForest:
        if doc.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported forest format version {doc.get('version')!r}")
        forest = cls(**doc["config"])
        forest.n_features_ = doc["n_features"]
        forest.n_sub_ = doc["n_sub_effective"]
        forest.trees = [SparsityTree.from_dict(t, forest.n_features_, forest.p) for t in doc["trees"]]
        return forest


def lss(forest: SparsityForest, x: np.ndarray) -> np.ndarray:
    return forest.score(x)
