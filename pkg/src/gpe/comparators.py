"""Baseline estimators: OLS, post-LASSO and the two oracle variants."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg

from .core import GpeFit, GpeOptions, fit_gpe
from .dataset import Dataset, FitFrame, prepare
from .distributions import norm_ppf
from .inference import RobustSummary, comparator_se_convention, sandwich_variance, z_test

logger = logging.getLogger(__name__)


class InfeasibleError(ValueError):
    pass


@dataclass(frozen=True)
class ComparatorFit:
    beta_hat: np.ndarray
    selected: np.ndarray
    model_size: int
    residuals: np.ndarray
    intercept_hat: float = 0.0
    dropped_collinear: int = 0

    def t_test(self, frame: FitFrame, tau, theta_0: float = 0.0,
               level: float = 0.05) -> RobustSummary:
        """Robust test of ``tau' beta = theta_0``; unselected coordinates count as constants."""
        tau = np.asarray(tau, dtype=float)
        sel = np.flatnonzero(self.selected)
        a = comparator_se_convention(self.selected, tau)[sel]
        var = sandwich_variance(frame.X[:, sel], self.residuals, a)
        return z_test(float(tau @ self.beta_hat), var, tau, theta_0, level)


def _qr_solve(Z, y):
    q, r = linalg.qr(Z, mode="economic", check_finite=False)
    return linalg.solve_triangular(r, q.T @ y, check_finite=False)


def _intercept(frame, beta):
    return float(frame.y_mean - frame.column_means @ beta) if frame.intercept else 0.0


def ols_fit(frame: FitFrame) -> ComparatorFit:
    """Least squares on all columns via QR."""
    n_params = frame.p + int(frame.intercept)
    if n_params >= frame.n:
        raise InfeasibleError(f"OLS needs n > p: n={frame.n}, parameters={n_params}")
    beta = _qr_solve(frame.X, frame.y)
    r = frame.y - frame.X @ beta
    return ComparatorFit(beta, np.ones(frame.p, dtype=bool), frame.p, r, _intercept(frame, beta))


def lasso_objective(frame, beta, lam, loadings):
    r = frame.y - frame.X @ beta
    return float(r @ r) / frame.n + lam / frame.n * float(np.sum(loadings * np.abs(beta)))


def lasso_cd(frame: FitFrame, lam: float, loadings=None, *, tol: float = 1e-9,
             max_sweeps: int = 10_000, beta_start=None, full_output: bool = False):
    """Cyclic coordinate descent for ``E_n[(y - x b)^2] + (lam/n) sum_j l_j |b_j|``.

    Converges when the largest coefficient change in a sweep drops below
    `tol`. With ``full_output=True`` returns ``(beta, info)`` where `info`
    carries the per-sweep objective trace and a convergence flag.
    """
    X, y = frame.X, frame.y
    n, p = X.shape
    if lam <= 0:
        raise ValueError("lam must be positive")
    loadings = np.ones(p) if loadings is None else np.asarray(loadings, dtype=float)
    if loadings.shape != (p,) or np.any(loadings <= 0):
        raise ValueError("loadings must be a positive vector of length p")
    G = X.T @ X / n
    c = X.T @ y / n
    diag = np.diag(G).copy()
    thresh = lam * loadings / (2.0 * n)
    beta = np.zeros(p) if beta_start is None else np.array(beta_start, dtype=float)
    # Gb = G @ beta maintained incrementally
    Gb = G @ beta
    trace = [lasso_objective(frame, beta, lam, loadings)]
    converged = False
    sweeps = 0
    active_only = False
    for sweeps in range(1, max_sweeps + 1):
        idx = np.flatnonzero(beta) if active_only else range(p)
        max_change = 0.0
        for j in idx:
            z = c[j] - Gb[j] + diag[j] * beta[j]
            if z > thresh[j]:
                b = (z - thresh[j]) / diag[j]
            elif z < -thresh[j]:
                b = (z + thresh[j]) / diag[j]
            else:
                b = 0.0
            d = b - beta[j]
            if d != 0.0:
                Gb += d * G[:, j]
                beta[j] = b
                max_change = max(max_change, abs(d))
        trace.append(lasso_objective(frame, beta, lam, loadings))
        if max_change < tol:
            if not active_only:
                converged = True
                break
            # confirm on the full coordinate set
            active_only = False
        else:
            active_only = True
    if not converged:
        logger.warning("lasso_cd did not converge in %d sweeps", max_sweeps)
    if full_output:
        return beta, {"objective_trace": np.asarray(trace), "converged": converged, "sweeps": sweeps}
    return beta


PLUGIN_C = 1.1
LASSO_PASSES = 2


def plugin_lambda(n: int, p: int, sigma: float, c: float = PLUGIN_C) -> float:
    """Plug-in penalty ``2 c sqrt(n) sigma Phi^{-1}(1 - g/(2p))``
    with ``g = 0.1 / log(max(p, n))``."""
    g = 0.1 / np.log(max(p, n))
    return float(2.0 * c * np.sqrt(n) * sigma * norm_ppf(1.0 - g / (2.0 * p)))


def _post_ols(frame, cols):
    """OLS on the given columns; collinear columns are dropped by pivoted QR."""
    beta = np.zeros(frame.p)
    if cols.size == 0:
        return beta, cols, 0
    Z = frame.X[:, cols]
    q, r, piv = linalg.qr(Z, mode="economic", pivoting=True, check_finite=False)
    d = np.abs(np.diag(r))
    rank = int(np.sum(d > 1e-10 * d[0])) if d.size else 0
    rank = min(rank, frame.n - 1 - int(frame.intercept))
    keep = np.sort(cols[piv[:rank]])
    dropped = cols.size - keep.size
    if keep.size:
        beta[keep] = _qr_solve(frame.X[:, keep], frame.y)
    return beta, keep, dropped


LOADINGS = ("heteroskedastic", "unit")


def penalty_loadings(frame: FitFrame, residuals) -> np.ndarray:
    """Heteroskedasticity-adapted loadings ``sqrt(E_n[x_j^2 e^2]) / sigma``.

    Normalized by ``sigma = sqrt(E_n[e^2])`` so that the plug-in penalty,
    which already carries sigma, stays on the same scale; under
    homoskedasticity with standardized columns every loading is near one.
    """
    e2 = np.asarray(residuals, dtype=float) ** 2
    sigma2 = float(np.mean(e2))
    if sigma2 <= 0:
        return np.ones(frame.p)
    psi = np.sqrt(np.mean(frame.X ** 2 * e2[:, None], axis=0) / sigma2)
    # guard against columns with no residual-weighted spread
    return np.maximum(psi, 1e-8)


def plasso_fit(frame: FitFrame, amelioration=(), *, loadings: str = "unit",
               passes: int = LASSO_PASSES) -> ComparatorFit:
    """Two-stage post-LASSO with the plug-in penalty.

    The first LASSO pass uses sigma = sd(y); each later pass re-estimates
    sigma (and, with ``loadings="heteroskedastic"``, the per-column
    loadings) from the previous pass's LASSO residuals. Columns in
    `amelioration` are forced into the OLS refit.
    """
    if passes < 1:
        raise ValueError("passes must be at least 1")
    if loadings not in LOADINGS:
        raise ValueError(f"loadings must be one of {LOADINGS}, got {loadings!r}")
    n, p = frame.n, frame.p
    amel = np.array(sorted(set(int(j) for j in amelioration)), dtype=np.intp)
    e = frame.y - np.mean(frame.y)
    beta1 = None
    for _ in range(passes):
        sigma = float(np.sqrt(np.mean(e * e)))
        if sigma <= 0:
            raise InfeasibleError("response has no variation left to penalize")
        psi = penalty_loadings(frame, e) if loadings == "heteroskedastic" else np.ones(p)
        lam = plugin_lambda(n, p, sigma)
        beta1 = lasso_cd(frame, lam, psi, beta_start=beta1)
        e = frame.y - frame.X @ beta1
    sel = np.union1d(np.flatnonzero(beta1), amel).astype(np.intp)
    beta2, keep, dropped = _post_ols(frame, sel)
    if dropped:
        logger.info("post-LASSO dropped %d collinear column(s)", dropped)
    selected = np.zeros(p, dtype=bool)
    selected[keep] = True
    r = frame.y - frame.X @ beta2
    return ComparatorFit(beta2, selected, int(selected.sum()), r, _intercept(frame, beta2), dropped)


def oracle_gpe(frame: FitFrame, beta_true, options: GpeOptions | None = None, *, C: float = 2.7,
               k_max: int | None = None):
    """Grouped estimator started at the true coefficients.

    With ``options`` given, fits at ``options.k``; otherwise the number of
    groups is selected by the usual rule. Returns ``(fit, trace_or_None)``.
    """
    from .selection import select_k

    beta_true = np.asarray(beta_true, dtype=float)
    if beta_true.shape != (frame.p,):
        raise ValueError(f"beta_true must have length {frame.p}")
    if options is not None and options.k is not None:
        return fit_gpe(frame, replace(options, init=beta_true)), None
    base = GpeOptions(k=1) if options is None else options
    return select_k(frame, C=C, k_max=k_max, options=replace(base, k=1, init=beta_true))


def oracle_ols(sampler, n: int, *, intercept: bool = True) -> tuple[ComparatorFit, FitFrame]:
    """OLS on a 3n-row sample drawn by ``sampler(3 * n) -> Dataset``."""
    data: Dataset = sampler(3 * n)
    if data.n != 3 * n:
        raise ValueError(f"sampler returned {data.n} rows, expected {3 * n}")
    if data.p + int(intercept) >= data.n:
        raise InfeasibleError(f"oracle OLS infeasible: 3n={data.n} <= p={data.p}")
    frame = prepare(data, intercept=intercept)
    return ols_fit(frame), frame
