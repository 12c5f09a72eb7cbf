"""Standard normal and chi-square(1) primitives shared across the package."""
import numpy as np
from scipy import special


def norm_cdf(x):
    """Standard normal CDF, elementwise."""
    return special.ndtr(x)


def norm_ppf(q):
    """Standard normal quantile function, elementwise.

    Returns -inf / +inf at q = 0 / 1 and nan outside [0, 1].
    """
    return special.ndtri(q)


def chi2_1_ppf(q):
    """Quantile of the chi-square distribution with one degree of freedom.

    Uses the identity F^{-1}(q) = (Phi^{-1}((1 + q) / 2))^2.
    """
    return norm_ppf((1.0 + np.asarray(q, dtype=float)) / 2.0) ** 2


def two_sided_pvalue(t):
    """p-value of a two-sided z-test, 2 * (1 - Phi(|t|))."""
    # ndtr(-|t|) avoids cancellation in the upper tail
    return 2.0 * special.ndtr(-np.abs(t))
