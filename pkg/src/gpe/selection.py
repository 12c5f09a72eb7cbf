"""Data-driven choice of the number of groups.

The rule picks the smallest k whose relative drop in mean squared residual
from k to k+1 groups, scaled by n, is at most C. With C = 2.7 (the 90th
percentile of chi-square(1)) the statistic is compared against its
limiting null distribution.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .admm import admm_fuse
from .cluster1d import GroupAssignment, kmeans_1d_exact
from .core import GpeFit, GpeOptions, fit_gpe, individual_estimates
from .dataset import FitFrame

logger = logging.getLogger(__name__)

DEFAULT_C = 2.7
DEFAULT_K_MAX = 40


@dataclass
class SelectionTrace:
    candidates: list = field(default_factory=list)
    rss: list = field(default_factory=list)
    statistic: list = field(default_factory=list)
    chosen_k: int = 0
    C: float = DEFAULT_C
    exhausted: bool = False
    clamped: int = 0
    perfect_fit: bool = False
    start_subgroups: int | None = None
    capped: bool = False

    def to_dict(self):
        return {
            "candidates": [int(k) for k in self.candidates],
            "rss": [float(v) for v in self.rss],
            "statistic": [float(v) for v in self.statistic],
            "chosen_k": int(self.chosen_k),
            "C": float(self.C),
            "exhausted": bool(self.exhausted),
            "clamped": int(self.clamped),
            "start_subgroups": self.start_subgroups,
            "capped": bool(self.capped),
        }


class PerfectFitError(ZeroDivisionError):
    """The k+1 fit has zero residual, so the relative drop is undefined."""


def phi_hat(rss_k: float, rss_k1: float) -> float:
    """Relative drop ``(rss_k - rss_k1) / rss_k1``; may be negative if the
    k+1 fit is worse than the k fit."""
    if rss_k1 <= 0:
        raise PerfectFitError("mean squared residual at k+1 is zero")
    return (rss_k - rss_k1) / rss_k1


def default_k_max(frame: FitFrame) -> int:
    n_fixed = frame.p - frame.groupable.size
    return max(1, min(frame.groupable.size, frame.n - 2 - n_fixed, DEFAULT_K_MAX))


def _split_widest(frame, fit: GpeFit):
    """Warm start for k+1: split the group whose individual estimates spread most."""
    est = individual_estimates(frame, fit)
    a = fit.assignment
    labels = a.labels.copy()
    best_g, best_spread = -1, -np.inf
    for g in range(a.n_free):
        members = np.flatnonzero(labels == g)
        if members.size < 2:
            continue
        spread = np.ptp(est[members])
        if spread > best_spread:
            best_g, best_spread = g, spread
    if best_g < 0:
        return None
    members = np.flatnonzero(labels == best_g)
    halves = kmeans_1d_exact(est[members], 2).assignment.labels
    return _relabel(labels, members[halves == 1], a)


def _split_singleton(frame, fit: GpeFit):
    """Warm start for k+1: the coefficient deviating most from its group goes alone.

    The resulting grouped model nests the k-group fit, so its residual sum
    of squares cannot be larger.
    """
    est = individual_estimates(frame, fit)
    a = fit.assignment
    free = np.flatnonzero(~a.fixed)
    sizes = a.sizes
    dev = np.abs(est[free] - fit.delta_hat[a.labels[free]])
    dev[sizes[a.labels[free]] < 2] = -np.inf
    if not np.isfinite(dev.max()):
        return None
    j = free[int(np.argmax(dev))]
    return _relabel(a.labels.copy(), np.array([j]), a)


def _relabel(labels, movers, a: GroupAssignment):
    k_free = a.n_free
    fixed_idx = np.flatnonzero(a.fixed)
    labels[fixed_idx] += 1
    labels[movers] = k_free
    return GroupAssignment(labels, a.fixed)


def fit_candidates(frame: FitFrame, options: GpeOptions, previous: GpeFit | None = None,
                   admm_state=None) -> GpeFit:
    """Best-objective fit at ``options.k`` over the fresh start and, when
    `previous` is given, warm starts built from the fit at ``options.k - 1``."""
    fits = [fit_gpe(frame, options, admm_state=admm_state)]
    if previous is not None:
        for make in (_split_widest, _split_singleton):
            start = make(frame, previous)
            if start is not None:
                fits.append(fit_gpe(frame, options, init_assignment=start))
    return min(fits, key=lambda f: f.objective)


def select_k(frame: FitFrame, C: float = DEFAULT_C, k_min: int = 1, k_max: int | None = None,
             options: GpeOptions | None = None, *, warm_starts: bool = False,
             cap_at_subgroups: bool = True):
    """Choose k by the residual-drop rule and return ``(fit, trace)``.

    Candidate fits are computed for k_min, k_min+1, ... and the first k whose
    statistic ``n * max(phi_hat(k), 0)`` is at most `C` is chosen. If none
    qualifies the k_max fit is returned with ``trace.exhausted`` set.

    With the ADMM initializer, candidates stop at the number of fused
    subgroups the initializer found (``trace.start_subgroups``): a larger k
    has no start of its own and could only come from arbitrary splits.
    ``cap_at_subgroups=False`` lifts this limit.

    By default every candidate starts from the initializer discretized at its
    own k. ``warm_starts=True`` also tries splits of the previous fit, which
    makes the mean squared residual non-increasing in k but searches harder
    than the statistic's null calibration assumes, so k is over-selected.
    """
    if C <= 0:
        raise ValueError("C must be positive")
    hard = min(frame.groupable.size, frame.n - 2 - (frame.p - frame.groupable.size))
    k_max = default_k_max(frame) if k_max is None else min(int(k_max), hard)
    if not 1 <= k_min <= k_max:
        raise ValueError(f"k range [{k_min}, {k_max}] infeasible for this frame")
    template = options or GpeOptions(k=k_min)
    use_admm = isinstance(template.init, str) and frame.groupable.size >= 2
    state = admm_fuse(frame, template.admm) if use_admm else None

    trace = SelectionTrace(C=C)
    if state is not None:
        trace.start_subgroups = state.subgroups()[0]
        if cap_at_subgroups and trace.start_subgroups < k_max:
            k_max = max(trace.start_subgroups, k_min)
            trace.capped = True
    n = frame.n
    cur = fit_candidates(frame, replace(template, k=k_min), admm_state=state)
    trace.candidates.append(k_min)
    trace.rss.append(cur.rss)
    for k in range(k_min, k_max):
        nxt = fit_candidates(frame, replace(template, k=k + 1),
                             previous=cur if warm_starts else None, admm_state=state)
        trace.candidates.append(k + 1)
        trace.rss.append(nxt.rss)
        try:
            phi = phi_hat(cur.rss, nxt.rss)
        except PerfectFitError:
            trace.statistic.append(np.inf if cur.rss > 0 else 0.0)
            if cur.rss > 0:
                trace.perfect_fit = True
                trace.chosen_k = k + 1
                return nxt, trace
            trace.chosen_k = k
            return cur, trace
        if phi < 0:
            trace.clamped += 1
            logger.debug("negative phi_hat %.3g at k=%d clamped to 0", phi, k)
        stat = n * max(phi, 0.0)
        trace.statistic.append(stat)
        if stat <= C:
            trace.chosen_k = k
            return cur, trace
        cur = nxt
    trace.chosen_k = k_max
    trace.exhausted = True
    return cur, trace


def choose_from_statistics(statistic, candidates, C: float) -> int:
    """Apply the stopping rule to a precomputed statistic sequence."""
    for k, stat in zip(candidates, statistic):
        if stat <= C:
            return int(k)
    return int(candidates[len(statistic)]) if len(candidates) > len(statistic) else int(candidates[-1])
