"""Grouped parameter estimation for high-dimensional linear regression.

Coefficients are clustered into a small number of groups that share a
value, the number of groups is chosen from the data, and inference on
linear functionals uses heteroskedasticity-robust standard errors.
"""
from .admm import AdmmConfig, admm_fuse, eta_update, mcp_penalty
from .cluster1d import GroupAssignment, kmeans_1d_exact, nearest_center
from .comparators import ols_fit, oracle_gpe, oracle_ols, plasso_fit
from .core import GpeFit, GpeOptions, fit_gpe, fitted_beta_original_scale
from .dataset import DataError, Dataset, FitFrame, load_csv, prepare
from .estimator import GroupedParameterRegressor, PostLassoRegressor
from .inference import RobustSummary, robust_variance, t_test, theta_functional
from .selection import SelectionTrace, select_k
from .simulation import DgpSpec, power_curve, run_mc

__version__ = "0.1.0"

__all__ = [
    "AdmmConfig", "admm_fuse", "eta_update", "mcp_penalty",
    "GroupAssignment", "kmeans_1d_exact", "nearest_center",
    "ols_fit", "oracle_gpe", "oracle_ols", "plasso_fit",
    "GpeFit", "GpeOptions", "fit_gpe", "fitted_beta_original_scale",
    "DataError", "Dataset", "FitFrame", "load_csv", "prepare",
    "GroupedParameterRegressor", "PostLassoRegressor",
    "RobustSummary", "robust_variance", "t_test", "theta_functional",
    "SelectionTrace", "select_k",
    "DgpSpec", "power_curve", "run_mc",
]
