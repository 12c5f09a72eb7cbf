"""The grouped parameter estimator.

Coefficients are clustered into k groups sharing one value each; the fit
alternates between per-coordinate least-squares updates with reassignment
to the nearest group center, and an exact least-squares re-solve of the
group values given the assignment.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import linalg

from .admm import AdmmConfig, AdmmState, admm_fuse, discretize, initial_grouping
from .cluster1d import GroupAssignment, nearest_center
from .dataset import FitFrame


class RankDeficientError(np.linalg.LinAlgError):
    """The aggregated (grouped) design does not have full column rank."""


@dataclass(frozen=True)
class GpeOptions:
    """Options for :func:`fit_gpe`.

    `init` is ``"admm"`` for the pairwise-fusion starting scheme, or an
    array of starting coefficients (which covers both user-provided and
    oracle starts). Best-iterate tracking is always on.

    With ``snap=True`` (default) the working coefficients are reset to their
    group values after every re-solve. ``snap=False`` carries the individual
    slopes from one sweep to the next instead; it then also requires the
    slopes to settle before declaring convergence.
    """

    k: int
    max_iter: int = 100
    tol: float = 1e-8
    init: Union[str, np.ndarray] = "admm"
    admm: AdmmConfig = field(default_factory=AdmmConfig)
    track_best: bool = True
    snap: bool = True

    def validate(self, frame: FitFrame):
        g = frame.groupable.size
        n_fixed = frame.p - g
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.k > g:
            raise ValueError(f"k={self.k} exceeds the {g} clusterable columns")
        if self.k + n_fixed > frame.n - 2:
            raise ValueError(f"k={self.k} (+{n_fixed} fixed) exceeds n-2={frame.n - 2}")
        if isinstance(self.init, str) and self.init != "admm":
            raise ValueError(f"unknown init {self.init!r}")


@dataclass(frozen=True)
class GpeFit:
    beta_hat: np.ndarray
    assignment: GroupAssignment
    delta_hat: np.ndarray
    intercept_hat: float
    residuals: np.ndarray
    objective: float
    objective_trace: np.ndarray
    iterations: int
    converged: bool
    k: int

    @property
    def rss(self) -> float:
        """Mean squared residual ``E_n[(y - x beta)^2]``."""
        return float(np.mean(self.residuals ** 2))


def grouped_design(X, assignment: GroupAssignment):
    """Columns of X summed within each group (n x k_total)."""
    return X @ assignment.matrix()


def _lstsq_qr(Z, y):
    q, r = linalg.qr(Z, mode="economic", check_finite=False)
    d = np.abs(np.diag(r))
    if d.size == 0 or d.min() <= 1e-10 * max(d.max(), 1e-300):
        s = np.linalg.svd(Z, compute_uv=False)
        raise RankDeficientError(
            f"grouped design is rank deficient (smallest singular value {s.min():.3g})")
    return linalg.solve_triangular(r, q.T @ y, check_finite=False)


def solve_delta(frame: FitFrame, assignment: GroupAssignment) -> np.ndarray:
    """Least-squares group values given the assignment."""
    if assignment.p != frame.p:
        raise ValueError("assignment does not match the frame's column count")
    return _lstsq_qr(grouped_design(frame.X, assignment), frame.y)


def objective(frame: FitFrame, assignment: GroupAssignment, delta) -> float:
    """``E_n[(y - X m delta)^2] / p``."""
    beta = np.asarray(delta, dtype=float)[assignment.labels]
    r = frame.y - frame.X @ beta
    return float(r @ r) / (frame.n * frame.p)


def update_coefficient(frame: FitFrame, j: int, beta_working, residual=None) -> float:
    """One-dimensional least-squares update of coefficient j.

    Regresses ``y - X_{-j} beta_{-j}`` on column j. Passing the current full
    residual ``y - X beta_working`` makes this O(n).
    """
    x = frame.X[:, j]
    nrm = float(x @ x)
    if nrm <= 0:
        raise ValueError(f"column {j} has zero variance")
    if residual is None:
        residual = frame.y - frame.X @ beta_working
    return float(beta_working[j] + (x @ residual) / nrm)


def _starting_point(frame, options, admm_state):
    k = options.k
    if isinstance(options.init, str) and frame.groupable.size < 2:
        # pairwise fusion needs two clusterable columns; one group is the only option
        assignment, _ = discretize(np.zeros(frame.p), k, frame.fixed_mask)
    elif isinstance(options.init, str):
        state = admm_state if admm_state is not None else admm_fuse(frame, options.admm)
        _, assignment, _ = initial_grouping(state, k)
    else:
        beta0 = np.asarray(options.init, dtype=float)
        if beta0.shape != (frame.p,):
            raise ValueError(f"starting coefficients must have length {frame.p}")
        assignment, _ = discretize(beta0, k, frame.fixed_mask)
    return assignment


def fit_gpe(frame: FitFrame, options: GpeOptions, *, admm_state: AdmmState | None = None,
            init_assignment: GroupAssignment | None = None) -> GpeFit:
    """Fit the grouped parameter estimator with k free groups.

    Each sweep visits the clusterable columns in ascending order, updates the
    coefficient by a one-dimensional least-squares step, moves it to the
    nearest running group mean and updates the two affected means. The group
    values are then re-solved exactly and, with ``options.snap``, the working
    coefficients are reset to them. Stops
    once a sweep leaves the assignment unchanged and the objective moves by
    less than `tol`. The best iterate seen is returned.

    `admm_state` reuses a precomputed ADMM run; `init_assignment` bypasses
    the initializer entirely (used for warm starts).
    """
    options.validate(frame)
    k = options.k
    X, y = frame.X, frame.y
    n, p = frame.n, frame.p
    XT = np.ascontiguousarray(X.T)
    sq = frame.column_sq_norms
    free = frame.groupable
    fixed = frame.fixed_mask

    if init_assignment is None:
        assignment = _starting_point(frame, options, admm_state)
    else:
        assignment = init_assignment
        if assignment.n_free != k or not np.array_equal(assignment.fixed, fixed):
            raise ValueError("init_assignment does not match k / fixed columns")
    labels = assignment.labels.copy()

    def solve(labels):
        a = GroupAssignment(labels, fixed)
        try:
            d = solve_delta(frame, a)
        except RankDeficientError:
            labels = _repair_rank(frame, labels, k)
            a = GroupAssignment(labels, fixed)
            d = solve_delta(frame, a)
        return a, d

    assignment, delta = solve(labels)
    labels = assignment.labels.copy()
    r_fit = y - X @ delta[labels]
    obj = float(r_fit @ r_fit) / (n * p)
    # working coefficients for the coordinate sweeps: either snapped to the
    # group values after every re-solve, or the individual slopes carried over
    beta = delta[labels]
    r = r_fit.copy()
    trace = [obj]
    best = (obj, assignment, delta, r_fit)
    converged = False
    it = 0
    for it in range(1, options.max_iter + 1):
        prev_labels = labels.copy()
        prev_obj = obj
        prev_beta = beta.copy()
        sums = np.bincount(labels[free], weights=beta[free], minlength=k)
        counts = np.bincount(labels[free], minlength=k)
        centers = sums / counts
        for j in range(p):
            xj = XT[j]
            bj = beta[j] + (xj @ r) / sq[j]
            step = bj - beta[j]
            if step != 0.0:
                r -= step * xj
            old = beta[j]
            beta[j] = bj
            if fixed[j]:
                continue
            src = labels[j]
            dst = nearest_center(bj, centers)
            sums[src] -= old
            counts[src] -= 1
            sums[dst] += bj
            counts[dst] += 1
            labels[j] = dst
            if counts[src] == 0:
                _refill(src, beta, labels, free, sums, counts, centers)
            for g in {src, dst}:
                if counts[g]:
                    centers[g] = sums[g] / counts[g]
        assignment, delta = solve(labels)
        labels = assignment.labels.copy()
        r_fit = y - X @ delta[labels]
        obj = float(r_fit @ r_fit) / (n * p)
        if options.snap:
            beta = delta[labels]
            r = r_fit.copy()
        trace.append(obj)
        if obj < best[0]:
            best = (obj, assignment, delta, r_fit)
        settled = options.snap or np.max(np.abs(beta - prev_beta)) < np.sqrt(options.tol)
        if settled and np.array_equal(labels, prev_labels) and abs(prev_obj - obj) < options.tol:
            converged = True
            break

    obj, assignment, delta, r = best
    beta_hat = delta[assignment.labels]
    return GpeFit(
        beta_hat=beta_hat,
        assignment=_canonical(assignment, delta)[0],
        delta_hat=_canonical(assignment, delta)[1],
        intercept_hat=float(frame.y_mean - frame.column_means @ beta_hat) if frame.intercept else 0.0,
        residuals=r,
        objective=obj,
        objective_trace=np.asarray(trace),
        iterations=it,
        converged=converged,
        k=k,
    )


def _refill(g, beta, labels, free, sums, counts, centers):
    # donate the worst-fitting coefficient from a group that can spare one
    dev = np.abs(beta[free] - centers[labels[free]])
    dev[counts[labels[free]] <= 1] = -np.inf
    j = free[int(np.argmax(dev))]
    src = labels[j]
    sums[src] -= beta[j]
    counts[src] -= 1
    sums[g] += beta[j]
    counts[g] += 1
    labels[j] = g
    centers[src] = sums[src] / counts[src]


def _repair_rank(frame, labels, k):
    # merge-free fallback: rebuild groups from sorted column order of the
    # current labels; used only when the grouped design lost rank
    free = frame.groupable
    labels = labels.copy()
    order = free[np.argsort(labels[free], kind="stable")]
    for g, chunk in enumerate(np.array_split(order, k)):
        labels[chunk] = g
    return labels


def _canonical(assignment: GroupAssignment, delta):
    """Relabel free groups by ascending value; fixed groups keep column order."""
    k_free = assignment.n_free
    order = np.argsort(delta[:k_free], kind="stable")
    remap = np.arange(assignment.k)
    remap[order] = np.arange(k_free)
    new_delta = delta.copy()
    new_delta[:k_free] = delta[:k_free][order]
    fixed_idx = np.flatnonzero(assignment.fixed)
    labels = remap[assignment.labels]
    # fixed singleton labels follow column order
    labels[fixed_idx] = k_free + np.arange(fixed_idx.size)
    new_delta[k_free:] = delta[assignment.labels[fixed_idx]]
    return GroupAssignment(labels, assignment.fixed), new_delta


def fitted_beta_original_scale(fit: GpeFit, frame: FitFrame):
    """Coefficients and intercept on the scale of the raw data.

    Centering shifts only the intercept. Returns ``(beta, intercept)`` with
    intercept 0.0 when the frame has none (check ``frame.intercept``).
    """
    if fit.beta_hat.shape != (frame.p,) or fit.residuals.shape != (frame.n,):
        raise ValueError("fit was not produced from this frame")
    beta = fit.beta_hat.copy()
    if not frame.intercept:
        return beta, 0.0
    return beta, float(frame.y_mean - frame.column_means @ beta)


def individual_estimates(frame: FitFrame, fit: GpeFit) -> np.ndarray:
    """Per-coordinate least-squares updates evaluated at the fitted grouping."""
    return fit.beta_hat + (frame.X.T @ fit.residuals) / frame.column_sq_norms
