"""Exact univariate k-means and group-assignment bookkeeping.

Least-squares partitions of a sorted sequence are contiguous (Fisher, 1958),
so the global optimum over all assignments into k non-empty groups is found
by an O(k p^2) dynamic program over split points.

Group labels are 0-based throughout the package. Free (clusterable) groups
come first and are numbered by ascending center; fixed singleton groups
follow in column order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GroupAssignment:
    labels: np.ndarray
    fixed: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.intp).copy()
        fixed = (np.zeros(labels.shape, dtype=bool) if self.fixed is None
                 else np.asarray(self.fixed, dtype=bool).copy())
        if labels.ndim != 1 or fixed.shape != labels.shape:
            raise ValueError("labels and fixed must be 1-d arrays of equal length")
        if labels.size == 0:
            raise ValueError("empty assignment")
        k = int(labels.max()) + 1
        sizes = np.bincount(labels, minlength=k)
        if labels.min() < 0 or np.any(sizes == 0):
            raise ValueError("empty groups are not allowed")
        if np.any(sizes[labels[fixed]] != 1):
            raise ValueError("fixed columns must sit alone in their group")
        labels.setflags(write=False)
        fixed.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "fixed", fixed)

    @property
    def k(self) -> int:
        """Total number of groups, fixed singletons included."""
        return int(self.labels.max()) + 1

    @property
    def n_free(self) -> int:
        """Number of groups made of clusterable columns."""
        return self.k - int(self.fixed.sum())

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)

    @property
    def p(self) -> int:
        return self.labels.size

    def matrix(self) -> np.ndarray:
        """The p x k binary membership matrix."""
        m = np.zeros((self.p, self.k))
        m[np.arange(self.p), self.labels] = 1.0
        return m

    def groups(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.labels == l) for l in range(self.k)]


@dataclass(frozen=True)
class Clustering1D:
    assignment: GroupAssignment
    centers: np.ndarray
    wss: float


def _segment_sse(s1, s2, i, j):
    cnt = j - i
    tot = s1[j] - s1[i]
    return (s2[j] - s2[i]) - tot * tot / cnt


def kmeans_1d_exact(values, k: int) -> Clustering1D:
    """Globally optimal k-means partition of a real vector.

    Returns labels in the original index order, with label 0 holding the
    smallest center. With fewer distinct values than `k`, each distinct value
    gets its own group and the largest groups are split to fill the rest.
    """
    v = np.asarray(values, dtype=float).reshape(-1)
    p = v.size
    k = int(k)
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    if k > p:
        raise ValueError(f"k={k} exceeds the number of values p={p}")
    if not np.all(np.isfinite(v)):
        raise ValueError("values must be finite")

    order = np.argsort(v, kind="stable")
    sv = v[order]
    distinct = np.unique(sv)
    if distinct.size <= k:
        bounds = _atom_bounds(sv, distinct, k)
    else:
        bounds = _dp_bounds(sv, k)

    labels_sorted = np.empty(p, dtype=np.intp)
    for l, (a, b) in enumerate(zip(bounds[:-1], bounds[1:])):
        labels_sorted[a:b] = l
    labels = np.empty(p, dtype=np.intp)
    labels[order] = labels_sorted
    centers = np.bincount(labels, weights=v, minlength=k) / np.bincount(labels, minlength=k)
    wss = float(np.sum((v - centers[labels]) ** 2))
    return Clustering1D(GroupAssignment(labels, np.zeros(p, dtype=bool)), centers, wss)


def _dp_bounds(sv, k):
    p = sv.size
    # shift for numerical stability of the prefix-sum SSE
    x = sv - sv.mean()
    s1 = np.concatenate(([0.0], np.cumsum(x)))
    s2 = np.concatenate(([0.0], np.cumsum(x * x)))
    inf = np.inf
    cost = np.full((k + 1, p + 1), inf)
    arg = np.zeros((k + 1, p + 1), dtype=np.intp)
    cost[0, 0] = 0.0
    for l in range(1, k + 1):
        # segment l covers sv[i:j] with l-1 <= i < j, j ranges l .. p-(k-l)
        for j in range(l, p - (k - l) + 1):
            i = np.arange(l - 1, j)
            c = cost[l - 1, i] + np.maximum(_segment_sse(s1, s2, i, j), 0.0)
            best = int(np.argmin(c))
            cost[l, j] = c[best]
            arg[l, j] = i[best]
    bounds = [p]
    j = p
    for l in range(k, 0, -1):
        j = int(arg[l, j])
        bounds.append(j)
    return bounds[::-1]


def _atom_bounds(sv, distinct, k):
    # one group per distinct value, then split the largest groups
    edges = list(np.searchsorted(sv, distinct, side="left")) + [sv.size]
    while len(edges) - 1 < k:
        sizes = np.diff(edges)
        g = int(np.argmax(sizes))
        edges.insert(g + 1, edges[g] + sizes[g] // 2)
    return edges


def nearest_center(value: float, centers) -> int:
    """Index of the closest center in absolute distance; ties go to the smallest index."""
    c = np.asarray(centers, dtype=float)
    if c.size == 0:
        raise ValueError("centers must be non-empty")
    return int(np.argmin(np.abs(value - c)))


def approx_bias_bound(values, clustering: Clustering1D, C_b: float) -> float:
    """Worst-case squared approximation bias ``4 C_b^2 M^2 p / k^2``.

    M is the realized largest group size of `clustering`; the bound applies to
    ``clustering.wss`` whenever k is below the number of distinct values
    (the optimum is exactly 0 otherwise).
    """
    v = np.asarray(values, dtype=float).reshape(-1)
    if C_b <= 0:
        raise ValueError("C_b must be positive")
    if np.max(np.abs(v)) > C_b:
        raise ValueError(f"values exceed the support bound C_b={C_b}")
    k = clustering.assignment.k
    M = int(clustering.assignment.sizes.max())
    return 4.0 * C_b ** 2 * M ** 2 * v.size / k ** 2
