"""Starting values from pairwise-fusion regression with a minimax concave penalty.

Solves

    min_beta  1/2 ||y - X beta||^2 + sum_{j<j'} p_gamma(|beta_j - beta_j'|, lambda)

by ADMM on the splitting beta_j - beta_j' = eta_jj'. Pairs range over the
clusterable columns only; fixed singleton columns are left unpenalized.
The pairwise-difference operator A is never materialized: A'A = gI - 11'
on the g clusterable coordinates.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .cluster1d import GroupAssignment, kmeans_1d_exact
from .dataset import FitFrame

logger = logging.getLogger(__name__)


class AdmmConfigError(ValueError):
    pass


class SingularSystemError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class AdmmConfig:
    gamma: float = 2.0
    lam: float = 1.0
    omega: float = 1.0
    tol: float = 1e-6
    max_iter: int = 500
    dual_update: str = "standard"

    def __post_init__(self):
        if self.dual_update not in ("standard", "difference"):
            raise AdmmConfigError(f"unknown dual_update {self.dual_update!r}")
        if self.gamma <= 1:
            raise AdmmConfigError(f"MCP requires gamma > 1, got {self.gamma}")
        if self.lam < 0:
            raise AdmmConfigError("lambda must be non-negative")
        if self.omega <= 0:
            raise AdmmConfigError("omega must be positive")
        if self.gamma * self.omega <= 1:
            raise AdmmConfigError("gamma * omega must exceed 1 for the eta update")


@dataclass
class AdmmState:
    beta: np.ndarray
    eta: np.ndarray
    nu: np.ndarray
    iterations: int
    primal_residual: float
    converged: bool
    lagrangian_trace: list = field(default_factory=list, repr=False)
    pairs: tuple = field(default=(), repr=False)
    fixed: np.ndarray | None = field(default=None, repr=False)

    def n_fused(self, fuse_tol: float) -> int:
        """Number of pairs whose split difference is below `fuse_tol`."""
        return int(np.sum(np.abs(self.eta) < fuse_tol))

    def subgroups(self):
        """Fused subgroups of the clusterable coordinates.

        Two coordinates share a subgroup when they are linked by a chain of
        pairs whose split difference is exactly zero; taking connected
        components keeps the relation transitive. Returns ``(count, labels)``
        with labels indexed over the clusterable coordinates.
        """
        I, J = self.pairs
        g = int(self.fixed.size - self.fixed.sum()) if self.fixed is not None else self.beta.size
        fused = self.eta == 0.0
        graph = coo_matrix((np.ones(int(fused.sum())), (I[fused], J[fused])), shape=(g, g))
        count, labels = connected_components(graph, directed=False)
        return int(count), labels


def mcp_penalty(t, lam: float, gamma: float):
    """Minimax concave penalty ``lam * int_0^t (1 - u/(gamma lam))_+ du``."""
    t = np.abs(np.asarray(t, dtype=float))
    if lam == 0:
        return np.zeros_like(t) if t.ndim else 0.0
    out = np.where(t <= gamma * lam, lam * t - t * t / (2.0 * gamma), 0.5 * gamma * lam * lam)
    return out if out.ndim else float(out)


def eta_update(xi, lam: float, gamma: float, omega: float):
    """Proximal map of the MCP: minimizer over eta of
    ``omega/2 (xi - eta)^2 + p_gamma(|eta|, lam)``.

    Firm thresholding: a soft threshold at lam/omega scaled by
    gamma / (gamma - 1/omega) inside |xi| <= gamma*lam, identity outside.
    """
    if gamma * omega <= 1:
        raise AdmmConfigError("gamma * omega must exceed 1")
    xi = np.asarray(xi, dtype=float)
    a = np.abs(xi)
    shrink = np.maximum(a - lam / omega, 0.0) * np.sign(xi)
    out = np.where(a <= gamma * lam, gamma / (gamma - 1.0 / omega) * shrink, xi)
    return out if out.ndim else float(out)


def _pairs(g):
    return np.triu_indices(g, k=1)


def _At(v, I, J, g):
    # A'v with rows e_j - e_j' for (j, j') = (I, J)
    return np.bincount(I, weights=v, minlength=g) - np.bincount(J, weights=v, minlength=g)


def _factor(M, ones_dir):
    try:
        c = linalg.cho_factor(M, lower=False, check_finite=False)
        d = np.abs(np.diag(c[0]))
        if d.min() > 1e-7 * d.max():
            return c
    except linalg.LinAlgError:
        pass
    # the all-ones direction over clusterable coordinates is the only
    # direction A'A does not cover
    scale = max(float(np.trace(M)) / M.shape[0], 1.0)
    M = M + 1e-8 * scale * np.outer(ones_dir, ones_dir)
    try:
        c = linalg.cho_factor(M, lower=False, check_finite=False)
        d = np.abs(np.diag(c[0]))
        if d.min() > 1e-10 * d.max():
            logger.debug("ADMM system regularized along the all-ones direction")
            return c
    except linalg.LinAlgError:
        pass
    cond = np.linalg.cond(M)
    raise SingularSystemError(f"ADMM linear system is singular (condition estimate {cond:.3g})")


def augmented_lagrangian(frame, beta, eta, nu, config, pairs=None):
    X, y = frame.X, frame.y
    free = frame.groupable
    I, J = pairs if pairs is not None else _pairs(free.size)
    b = beta[free]
    gap = b[I] - b[J] - eta
    r = y - X @ beta
    return float(0.5 * r @ r + np.sum(mcp_penalty(eta, config.lam, config.gamma))
                 + nu @ gap + 0.5 * config.omega * gap @ gap)


def admm_fuse(frame: FitFrame, config: AdmmConfig | None = None, beta_start=None) -> AdmmState:
    """Run ADMM until ``||A beta - eta|| < tol`` or `max_iter` iterations.

    Hitting `max_iter` is not an error; the state comes back with
    ``converged=False``.
    """
    config = config or AdmmConfig()
    X, y = frame.X, frame.y
    p = frame.p
    free = frame.groupable
    g = free.size
    if g < 2:
        raise ValueError("need at least two clusterable columns for pairwise fusion")
    I, J = _pairs(g)
    om = config.omega

    AtA = np.zeros((p, p))
    AtA[np.ix_(free, free)] = g * np.eye(g) - np.ones((g, g))
    M = X.T @ X + om * AtA
    ones_dir = np.zeros(p)
    ones_dir[free] = 1.0 / np.sqrt(g)
    fac = _factor(M, ones_dir)
    Xty = X.T @ y

    if beta_start is None:
        beta = np.linalg.lstsq(X, y, rcond=None)[0]
    else:
        beta = np.array(beta_start, dtype=float)
    b = beta[free]
    eta = b[I] - b[J]
    nu = np.zeros(eta.size)
    trace = []
    resid = np.inf
    converged = False
    it = 0
    rhs = np.empty(p)
    for it in range(1, config.max_iter + 1):
        rhs[:] = Xty
        rhs[free] += _At(om * eta - nu, I, J, g)
        beta = linalg.cho_solve(fac, rhs, check_finite=False)
        b = beta[free]
        diff = b[I] - b[J]
        # the prox argument follows from the +nu'(A beta - eta) sign in the Lagrangian
        eta = eta_update(diff + nu / om, config.lam, config.gamma, om)
        gap = diff - eta
        nu = nu + om * (gap if config.dual_update == "standard" else diff)
        resid = float(np.sqrt(gap @ gap))
        trace.append(augmented_lagrangian(frame, beta, eta, nu, config, (I, J)))
        if resid < config.tol:
            converged = True
            break
    if not converged:
        logger.debug("ADMM stopped at max_iter=%d with residual %.3g", config.max_iter, resid)
    return AdmmState(beta=beta, eta=eta, nu=nu, iterations=it, primal_residual=resid,
                     converged=converged, lagrangian_trace=trace, pairs=(I, J),
                     fixed=frame.fixed_mask)


def discretize(beta0, k: int, fixed=None):
    """Group `beta0` by exact 1-D k-means over its non-fixed coordinates.

    Fixed coordinates become trailing singleton groups. Returns the
    assignment and the per-group centers (fixed groups keep their value).
    """
    beta0 = np.asarray(beta0, dtype=float)
    p = beta0.size
    fixed = np.zeros(p, dtype=bool) if fixed is None else np.asarray(fixed, dtype=bool)
    free = np.flatnonzero(~fixed)
    if not 1 <= k <= free.size:
        raise ValueError(f"k={k} must lie in [1, {free.size}] (number of clusterable coordinates)")
    cl = kmeans_1d_exact(beta0[free], k)
    labels = np.empty(p, dtype=np.intp)
    labels[free] = cl.assignment.labels
    fixed_idx = np.flatnonzero(fixed)
    labels[fixed_idx] = k + np.arange(fixed_idx.size)
    centers = np.concatenate([cl.centers, beta0[fixed_idx]])
    return GroupAssignment(labels, fixed), centers


def initial_grouping(state: AdmmState, k: int, fuse_tol: float = 1e-3):
    """Map ADMM output to a starting point for the grouped estimator.

    Returns ``(beta0, assignment, centers)``. `fuse_tol` only feeds a debug
    diagnostic (pairs fused by the penalty).
    """
    logger.debug("ADMM fused %d of %d pairs", state.n_fused(fuse_tol), state.eta.size)
    assignment, centers = discretize(state.beta, k, state.fixed)
    return state.beta.copy(), assignment, centers
