"""scikit-learn compatible wrappers around the grouped estimator and post-LASSO."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .admm import AdmmConfig
from .comparators import plasso_fit
from .core import GpeOptions, fit_gpe
from .dataset import Dataset, prepare
from .inference import t_test, theta_functional
from .selection import DEFAULT_C, select_k


def _frame(X, y, fit_intercept, ungrouped=()):
    return prepare(Dataset(y=y, X=X), intercept=fit_intercept, ungrouped=ungrouped)


class GroupedParameterRegressor(RegressorMixin, BaseEstimator):
    """Linear regression whose coefficients share k distinct values.

    Parameters
    ----------
    n_groups : int or None
        Number of free groups. ``None`` selects it with the residual-drop rule.
    C : float
        Threshold of the selection rule.
    max_groups : int or None
        Largest k tried by the selection rule.
    ungrouped : sequence of int
        Column indices that keep their own coefficient.
    fit_intercept : bool
    max_iter, tol : passed to the alternating fit.
    admm_lambda, admm_gamma, admm_omega : starting-scheme penalty settings.

    Attributes
    ----------
    coef_, intercept_, labels_, group_values_, n_groups_, selection_trace_
    """

    def __init__(self, n_groups=None, C=DEFAULT_C, max_groups=None, ungrouped=(),
                 fit_intercept=True, max_iter=100, tol=1e-8,
                 admm_lambda=1.0, admm_gamma=2.0, admm_omega=1.0):
        self.n_groups = n_groups
        self.C = C
        self.max_groups = max_groups
        self.ungrouped = ungrouped
        self.fit_intercept = fit_intercept
        self.max_iter = max_iter
        self.tol = tol
        self.admm_lambda = admm_lambda
        self.admm_gamma = admm_gamma
        self.admm_omega = admm_omega

    def _options(self, k):
        admm = AdmmConfig(gamma=self.admm_gamma, lam=self.admm_lambda, omega=self.admm_omega)
        return GpeOptions(k=k, max_iter=self.max_iter, tol=self.tol, admm=admm)

    def fit(self, X, y):
        X, y = validate_data(self, X, y, y_numeric=True)
        frame = _frame(X, y, self.fit_intercept, self.ungrouped)
        if self.n_groups is None:
            fit, trace = select_k(frame, C=self.C, k_max=self.max_groups, options=self._options(1))
            self.selection_trace_ = trace
        else:
            fit = fit_gpe(frame, self._options(int(self.n_groups)))
            self.selection_trace_ = None
        self.frame_ = frame
        self.fit_ = fit
        self.coef_ = fit.beta_hat.copy()
        self.intercept_ = fit.intercept_hat
        self.labels_ = np.asarray(fit.assignment.labels)
        self.group_values_ = fit.delta_hat.copy()
        self.n_groups_ = fit.k
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, reset=False)
        return X @ self.coef_ + self.intercept_

    def test_functional(self, tau=None, theta_0=0.0, level=0.05):
        """Robust z-test of ``tau' beta = theta_0``; `tau` defaults to the
        normalized sum of all coefficients."""
        check_is_fitted(self, "coef_")
        tau = theta_functional(self.coef_.size) if tau is None else np.asarray(tau, dtype=float)
        return t_test(self.frame_, self.fit_, tau, theta_0, level)


class PostLassoRegressor(RegressorMixin, BaseEstimator):
    """LASSO selection with the plug-in penalty followed by an OLS refit."""

    def __init__(self, amelioration=(), loadings="unit", fit_intercept=True):
        self.amelioration = amelioration
        self.loadings = loadings
        self.fit_intercept = fit_intercept

    def fit(self, X, y):
        X, y = validate_data(self, X, y, y_numeric=True)
        frame = _frame(X, y, self.fit_intercept)
        fit = plasso_fit(frame, self.amelioration, loadings=self.loadings)
        self.frame_ = frame
        self.fit_ = fit
        self.coef_ = fit.beta_hat.copy()
        self.intercept_ = fit.intercept_hat
        self.support_ = np.flatnonzero(fit.selected)
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, reset=False)
        return X @ self.coef_ + self.intercept_

    def test_functional(self, tau=None, theta_0=0.0, level=0.05):
        check_is_fitted(self, "coef_")
        tau = theta_functional(self.coef_.size) if tau is None else np.asarray(tau, dtype=float)
        return self.fit_.t_test(self.frame_, tau, theta_0, level)
