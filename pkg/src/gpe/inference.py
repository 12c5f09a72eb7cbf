"""Heteroskedasticity-robust inference on linear functionals of the coefficients.

Variances are HC0 sandwiches on the grouped design ``X m``: for a unit
vector tau the functional tau' beta has variance
``a' A^{-1} S A^{-1} a / n`` with ``a = m' tau``, ``A = E_n[z z']`` and
``S = E_n[z z' e^2]``. Tests use standard normal critical values.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .core import GpeFit, grouped_design
from .dataset import FitFrame
from .distributions import norm_ppf, two_sided_pvalue


@dataclass(frozen=True)
class RobustSummary:
    theta_hat: float
    se_theta: float
    t_stat: float
    p_value: float
    reject_5pct: bool
    tau: np.ndarray
    theta_0: float = 0.0
    level: float = 0.05
    degenerate: bool = False

    @property
    def reject(self) -> bool:
        return self.p_value < self.level

    def to_dict(self):
        return {
            "theta_hat": float(self.theta_hat),
            "se": float(self.se_theta),
            "t_stat": float(self.t_stat),
            "p_value": float(self.p_value),
            "theta_0": float(self.theta_0),
            "reject": bool(self.reject),
            "degenerate": bool(self.degenerate),
        }


def sandwich_variance(Z, residuals, a) -> float:
    """Variance of ``a' gamma_hat`` for least squares of y on Z (HC0)."""
    Z = np.asarray(Z, dtype=float)
    a = np.asarray(a, dtype=float)
    n = Z.shape[0]
    if Z.shape[1] == 0 or not np.any(a):
        return 0.0
    A = Z.T @ Z / n
    try:
        w = linalg.solve(A, a, assume_a="pos")
    except (linalg.LinAlgError, ValueError) as exc:
        raise np.linalg.LinAlgError("grouped Gram matrix is singular") from exc
    s = Z @ w * residuals
    return float(s @ s) / n / n


def robust_variance(frame: FitFrame, fit: GpeFit, tau) -> float:
    """Variance estimate of ``tau' beta_hat`` (not of its sqrt(n)-scaled version)."""
    tau = np.asarray(tau, dtype=float)
    if tau.shape != (frame.p,):
        raise ValueError(f"tau must have length {frame.p}")
    Z = grouped_design(frame.X, fit.assignment)
    a = fit.assignment.matrix().T @ tau
    return sandwich_variance(Z, fit.residuals, a)


def theta_functional(p: int) -> np.ndarray:
    """The normalized sum functional ``(1, ..., 1) / sqrt(p)``."""
    if p < 1:
        raise ValueError("p must be positive")
    return np.full(p, 1.0 / np.sqrt(p))


def unit_vector(p: int, j: int) -> np.ndarray:
    e = np.zeros(p)
    e[j] = 1.0
    return e


def z_test(theta_hat: float, variance: float, tau, theta_0: float = 0.0,
           level: float = 0.05) -> RobustSummary:
    """Two-sided z-test of ``tau' beta = theta_0``."""
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    se = float(np.sqrt(max(variance, 0.0)))
    diff = theta_hat - theta_0
    degenerate = se == 0.0
    if degenerate:
        t = 0.0 if diff == 0 else np.copysign(np.inf, diff)
        pval = 1.0 if diff == 0 else 0.0
    else:
        t = diff / se
        pval = float(two_sided_pvalue(t))
    return RobustSummary(theta_hat=float(theta_hat), se_theta=se, t_stat=float(t),
                         p_value=pval, reject_5pct=bool(pval < 0.05), tau=np.asarray(tau),
                         theta_0=float(theta_0), level=level, degenerate=degenerate)


def t_test(frame: FitFrame, fit: GpeFit, tau, theta_0: float = 0.0,
           level: float = 0.05) -> RobustSummary:
    """Robust test of ``tau' beta = theta_0`` for a grouped fit, treating k as fixed."""
    tau = np.asarray(tau, dtype=float)
    return z_test(float(tau @ fit.beta_hat), robust_variance(frame, fit, tau), tau, theta_0, level)


def critical_value(level: float = 0.05) -> float:
    return float(norm_ppf(1.0 - level / 2.0))


def comparator_se_convention(selected, tau) -> np.ndarray:
    """Zero out tau on coordinates a selection step dropped (treated as constants)."""
    return np.where(np.asarray(selected, dtype=bool), np.asarray(tau, dtype=float), 0.0)
