"""Coverage, interval-width, adaptivity, and accuracy metrics."""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np
from scipy.stats import rankdata

__all__ = [
    "empirical_coverage",
    "normalized_width",
    "spearman_rho",
    "validation_error",
    "beta_coverage_law",
    "beta_coverage_cdf",
]


def empirical_coverage(lower, upper, truths) -> float:
    """Fraction of truths inside the closed intervals [lower_j, upper_j].

    Infinite bounds count as covering on their side.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    truths = np.asarray(truths, dtype=float)
    if not lower.shape == upper.shape == truths.shape:
        raise ValueError("lower, upper, truths must have equal lengths")
    if truths.size < 1:
        raise ValueError("empty inputs")
    inside = (truths >= lower) & (truths <= upper)
    return float(np.mean(inside))


def normalized_width(lower: float, upper: float, var_val: float) -> float:
    """Squared interval length over the validation-response variance.

    Infinite intervals map to inf; analogous to a relative mean-square
    error, so widths and accuracy live on the same scale.
    """
    if not var_val > 0:
        raise ValueError("var_val must be positive")
    if np.isinf(lower) or np.isinf(upper):
        return float("inf")
    return float((upper - lower) ** 2 / var_val)


def spearman_rho(a, b) -> float:
    """Rank correlation (average ranks on ties); nan if either input is constant."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.size < 3:
        raise ValueError("need two equal-length vectors with k >= 3")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        return float("nan")
    ra = rankdata(a, method="average")
    rb = rankdata(b, method="average")
    return float(np.corrcoef(ra, rb)[0, 1])


def validation_error(y_true, y_pred) -> float:
    """Relative mean-square validation error of a surrogate."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.size < 2:
        raise ValueError("need at least two validation points")
    denom = np.sum((y_true - y_true.mean()) ** 2)
    if denom == 0:
        raise ValueError("validation responses have zero variance")
    return float(np.sum((y_true - y_pred) ** 2) / denom)


def beta_coverage_law(n_cal: int, alpha: float) -> Optional[Tuple[int, int]]:
    """Beta(a, b) parameters of the split-conformal coverage distribution.

    With l = floor((n_cal+1) * alpha), the training-conditional coverage on
    an infinite validation set follows Beta(n_cal+1-l, l).  Returns None
    when l = 0 (degenerate: the interval is always (-inf, inf)).

    The finite-validation refinement is Beta-Binomial; for n_val on the
    order of 1e6 the Binomial layer is negligible and the Beta law is
    used directly.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    ell = int(np.floor((n_cal + 1) * alpha))
    if ell < 1:
        return None
    return n_cal + 1 - ell, ell


def beta_coverage_cdf(x, n_cal: int, alpha: float):
    """CDF of the split-conformal coverage law (for KS-style checks)."""
    from scipy.stats import beta as beta_dist

    params = beta_coverage_law(n_cal, alpha)
    if params is None:
        raise ValueError("degenerate coverage law (l = 0)")
    a, b = params
    return beta_dist.cdf(x, a, b)
