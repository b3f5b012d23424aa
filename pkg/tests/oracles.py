"""Brute-force reference computations, deliberately independent of the package."""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np


def exact(x) -> Fraction:
    """Rational value of ``x``; floats are read through their shortest decimal repr."""
    if isinstance(x, (Fraction, int)):
        return Fraction(x)
    return Fraction(repr(float(x)))


def exact_split_objective(positions, breakpoints, lo, hi) -> Fraction:
    """sum_i (len_i/L) * (c_i/len_i - n/L)^2 in exact rational arithmetic.

    A position equal to a breakpoint counts in the piece to its right.
    """
    pts = [exact(x) for x in positions]
    edges = [exact(lo)] + [exact(b) for b in breakpoints] + [exact(hi)]
    total_len = edges[-1] - edges[0]
    mean = Fraction(len(pts)) / total_len
    value = Fraction(0)
    for a, b in zip(edges[:-1], edges[1:]):
        last = b == edges[-1]
        c = sum(1 for x in pts if a <= x and (x < b or (last and x <= b)))
        length = b - a
        value += length / total_len * (Fraction(c) / length - mean) ** 2
    return value


def exact_midpoints(positions) -> list[Fraction]:
    vals = sorted(set(exact(x) for x in positions))
    return [(a + b) / 2 for a, b in zip(vals[:-1], vals[1:])]


def enumerate_best_split(positions, lo, hi, p):
    """Exhaustive search over every set of 1..p-1 midpoint breakpoints.

    Returns (best exact objective, lexicographically smallest optimal tuple of
    gap indices); gap ``g`` is the midpoint between distinct values g and g+1.
    """
    mids = exact_midpoints(positions)
    best, best_set = None, None
    for r in range(1, min(p - 1, len(mids)) + 1):
        for combo in itertools.combinations(range(len(mids)), r):
            v = exact_split_objective(positions, [mids[g] for g in combo], lo, hi)
            if best is None or v > best or (v == best and combo < best_set):
                best, best_set = v, combo
    return best, best_set


def pair_count_auc(scores, labels) -> float:
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = 0.0
    for a in pos:
        for b in neg:
            if a > b:
                wins += 1.0
            elif a == b:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def f1_at(scores, labels, threshold) -> Fraction:
    tp = sum(1 for s, y in zip(scores, labels) if s >= threshold and y == 1)
    fp = sum(1 for s, y in zip(scores, labels) if s >= threshold and y == 0)
    fn = sum(1 for s, y in zip(scores, labels) if s < threshold and y == 1)
    if tp == 0:
        return Fraction(0)
    precision = Fraction(tp, tp + fp)
    recall = Fraction(tp, tp + fn)
    return 2 * recall * precision / (recall + precision)


def exhaustive_best_f1(scores, labels) -> tuple[Fraction, float]:
    best, thr = Fraction(-1), None
    for t in sorted(set(scores)):  # ascending, so the first maximum is the lowest threshold
        v = f1_at(scores, labels, t)
        if v > best:
            best, thr = v, t
    return best, thr


def kmeans_objective_loop(points, centers) -> float:
    total = 0.0
    for x in points:
        total += min(math.sqrt(sum((a - b) ** 2 for a, b in zip(x, c))) for c in centers)
    return total


def best_two_partition_1d(points):
    """Optimal 2-means partition of 1-D points by enumerating every labelling."""
    pts = list(points)
    best = None
    for mask in itertools.product([0, 1], repeat=len(pts)):
        if 0 not in mask or 1 not in mask:
            continue
        groups = [[x for x, m in zip(pts, mask) if m == g] for g in (0, 1)]
        centers = [sum(g) / len(g) for g in groups]
        sse = sum((x - centers[m]) ** 2 for x, m in zip(pts, mask))
        if best is None or sse < best[0]:
            best = (sse, sorted(centers))
    return best[1]


def leaf_containing(tree, x) -> list[int]:
    """Every leaf whose half-open cube holds ``x`` (top edge 1 is closed)."""
    hits = []
    for i in np.flatnonzero(tree.is_leaf):
        lo, hi = tree.lo[i], tree.hi[i]
        inside = np.all((x >= lo) & ((x < hi) | ((hi == 1.0) & (x <= 1.0))))
        if inside:
            hits.append(int(i))
    return hits
