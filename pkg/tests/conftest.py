import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gpe.core import solve_delta
from gpe.cluster1d import GroupAssignment
from gpe.dataset import Dataset, prepare

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_frame(n, p, beta=None, noise=1.0, seed=0, intercept=True, ungrouped=()):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    beta = rng.standard_normal(p) if beta is None else np.asarray(beta, dtype=float)
    y = X @ beta + noise * rng.standard_normal(n)
    return prepare(Dataset(y=y, X=X), intercept=intercept, ungrouped=ungrouped)


def set_partitions(items, k):
    """All partitions of `items` into exactly k non-empty blocks."""
    items = list(items)
    if k == 0:
        if not items:
            yield []
        return
    if len(items) < k:
        return
    first, rest = items[0], items[1:]
    # first in a block of its own
    for part in set_partitions(rest, k - 1):
        yield [[first]] + part
    # first joins an existing block
    for part in set_partitions(rest, k):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]


def restricted_growth_labels(p, k):
    """Every labelling of p items into exactly k blocks, one row per partition.

    Rows are restricted growth strings, so each set partition appears once.
    """
    rows = np.zeros((1, 1), dtype=np.int8)
    for _ in range(1, p):
        top = rows.max(axis=1)
        parts = []
        for g in range(k):
            keep = rows[top + 1 >= g]
            parts.append(np.column_stack([keep, np.full(len(keep), g, dtype=np.int8)]))
        rows = np.concatenate(parts)
    return rows[rows.max(axis=1) == k - 1]


def brute_force_wss(values, k):
    v = np.asarray(values, dtype=float)
    labels = restricted_growth_labels(v.size, k)
    if labels.size == 0:
        return np.inf
    onehot = labels[:, :, None] == np.arange(k)
    means = (onehot * v[None, :, None]).sum(axis=1) / onehot.sum(axis=1)
    resid = v[None, :] - np.take_along_axis(means, labels.astype(np.intp), axis=1)
    return float(np.min(np.sum(resid * resid, axis=1)))


def exhaustive_objective(frame, k):
    """Minimum grouped least-squares objective over every k-partition of the columns."""
    best = np.inf
    for part in set_partitions(range(frame.p), k):
        labels = np.empty(frame.p, dtype=int)
        for g, block in enumerate(part):
            labels[block] = g
        a = GroupAssignment(labels, np.zeros(frame.p, dtype=bool))
        d = solve_delta(frame, a)
        r = frame.y - frame.X @ d[labels]
        best = min(best, float(r @ r) / (frame.n * frame.p))
    return best


def qr_ols(frame):
    q, r = np.linalg.qr(frame.X)
    return np.linalg.solve(r, q.T @ frame.y)


def hc0_variance(X, e, a):
    """Direct HC0: a' (X'X)^{-1} X' diag(e^2) X (X'X)^{-1} a."""
    bread = np.linalg.inv(X.T @ X)
    meat = X.T @ (X * (e ** 2)[:, None])
    return float(a @ bread @ meat @ bread @ a)


@pytest.fixture
def example_csv():
    from importlib.resources import files
    return str(files("gpe") / "data" / "example.csv")
