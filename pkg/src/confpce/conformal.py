"""Finite-sample quantiles and the prediction-interval engines.

Quantiles follow the conformal convention: the upper quantile at level
alpha is the ceil((1-alpha)(n+1))-th order statistic and the lower one
the floor(alpha(n+1))-th; an index outside 1..n yields an explicit
+/-inf bound rather than clamping, which preserves the finite-sample
guarantee and surfaces undersized calibration sets.

Engines:

* split conformal (the large-calibration reference case);
* full conformal for least-squares fits, via the rank-one-update
  linearization of the augmented residuals: residuals are affine in the
  trial response, so the interval bounds live on at most n candidate
  values and a sorted sweep over them resolves the boundary conditions
  exactly in O(n log n) per query point;
* Jackknife+ from precomputed leave-one-out predictions/residuals;
* percentile bootstrap over refits on resampled training sets;
* full conformal for sparse fits: the boundary conditions are evaluated
  on the trial-response homotopy path and their squares minimized by a
  bounded Brent search, with a bracket of the point prediction +/- a
  multiple of the training-residual quantile (widened once on failure).

Default symmetry follows the source formulations: signed residuals
(asymmetric, both tails at alpha/2) for full conformal and Jackknife+,
absolute residuals for the split reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import BracketFailureError, NumericalError, SingularUpdateError
from .homotopy import homotopy_path
from .inputs import rng_from_seed
from .pce import Gram, fit_ols
from .sparse import hybrid_fit

__all__ = [
    "q_plus",
    "q_minus",
    "PredictionInterval",
    "split_interval",
    "full_conformal_ols",
    "FullConformalOls",
    "jackknife_plus",
    "bootstrap_interval",
    "bootstrap_coeffs",
    "full_conformal_sparse",
]

INDEX_GUARD = 1e-9      # absorbs float noise in (1-alpha)(n+1) before ceil/floor
SLOPE_TOL = 1e-12       # |B_new - B_i| below this: not a candidate
DEFAULT_BRACKET_MULT = 20.0
DEFAULT_OBJ_TOL = 1e-6


def _check_alpha(alpha: float):
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")


def _upper_index(k: int, alpha: float) -> int:
    """1-based order-statistic index of the upper conformal quantile."""
    return int(math.ceil((1.0 - alpha) * (k + 1) - INDEX_GUARD))


def _lower_index(k: int, alpha: float) -> int:
    return int(math.floor(alpha * (k + 1) + INDEX_GUARD))


def q_plus(values, alpha: float) -> float:
    """ceil((1-alpha)(k+1))-th smallest value; +inf when the index exceeds k."""
    _check_alpha(alpha)
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise ValueError("q_plus of an empty sample")
    k = _upper_index(values.size, alpha)
    if k > values.size:
        return float("inf")
    return float(np.partition(values, k - 1)[k - 1])


def q_minus(values, alpha: float) -> float:
    """floor(alpha(k+1))-th smallest value; -inf when the index is zero."""
    _check_alpha(alpha)
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise ValueError("q_minus of an empty sample")
    k = _lower_index(values.size, alpha)
    if k < 1:
        return float("-inf")
    return float(np.partition(values, k - 1)[k - 1])


@dataclass(frozen=True)
class PredictionInterval:
    lower: float
    upper: float

    def __post_init__(self):
        if math.isnan(self.lower) or math.isnan(self.upper):
            raise ValueError("interval bounds must not be NaN")
        if self.lower > self.upper:
            raise ValueError(f"lower {self.lower} > upper {self.upper}")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def covers(self, y: float) -> bool:
        return self.lower <= y <= self.upper


def split_interval(pred_star: float, cal_resid, alpha: float,
                   symmetric: bool = True) -> PredictionInterval:
    """Split-conformal interval from calibration residuals (signed).

    Symmetric: center +/- upper quantile of |residuals| at alpha.
    Asymmetric: center shifted by the alpha/2 quantile pair of the
    signed residuals.
    """
    cal_resid = np.asarray(cal_resid, dtype=float)
    if cal_resid.size == 0:
        raise ValueError("empty calibration set")
    if symmetric:
        half = q_plus(np.abs(cal_resid), alpha)
        return PredictionInterval(pred_star - half, pred_star + half)
    return PredictionInterval(pred_star + q_minus(cal_resid, alpha / 2.0),
                              pred_star + q_plus(cal_resid, alpha / 2.0))


def _scan_candidate_bounds(gaps: np.ndarray, slopes: np.ndarray, n: int,
                           need_ge: int, need_le: int):
    """Hull of {y : #(g_i(y) >= 0) >= need_ge and #(g_i(y) <= 0) >= need_le}.

    g_i(y) = gaps[i] + slopes[i] * y is the i-th training residual minus
    the query residual; counts at the crossing points themselves include
    the tying score (closed comparisons).  need_* <= 0 means that side
    of the condition is vacuous.
    """
    vac_ge = need_ge <= 0
    vac_le = need_le <= 0
    if vac_ge and vac_le:
        return float("-inf"), float("inf")

    const = np.abs(slopes) < SLOPE_TOL
    cross = ~const
    const_ge = int(np.sum(gaps[const] >= 0.0))
    const_le = int(np.sum(gaps[const] <= 0.0))
    events = -gaps[cross] / slopes[cross]
    going_up = slopes[cross] > 0
    start_ge = int(np.sum(~going_up)) + const_ge   # decreasing g_i are positive at -inf
    start_le = int(np.sum(going_up)) + const_le

    if events.size == 0:
        # condition constant over the whole line; an empty conformal set
        # falls back to the infinite hull (fail-open, mirroring overflow)
        return float("-inf"), float("inf")

    uvals, inverse = np.unique(events, return_inverse=True)
    ups = np.bincount(inverse[going_up], minlength=uvals.size)
    downs = np.bincount(inverse[~going_up], minlength=uvals.size)
    cge_open = start_ge + np.cumsum(ups - downs)
    cle_open = start_le + np.cumsum(downs - ups)
    cge_left = np.concatenate([[start_ge], cge_open[:-1]])
    cle_left = np.concatenate([[start_le], cle_open[:-1]])
    cge_at = cge_left + ups     # every score tying at the event counts on both sides
    cle_at = cle_left + downs

    ok_at = np.ones(uvals.size, dtype=bool)
    if not vac_ge:
        ok_at &= cge_at >= need_ge
    if not vac_le:
        ok_at &= cle_at >= need_le
    ok_left = (vac_ge or start_ge >= need_ge) and (vac_le or start_le >= need_le)
    ok_right = (vac_ge or cge_open[-1] >= need_ge) and (vac_le or cle_open[-1] >= need_le)

    hits = uvals[ok_at]
    lower = float("-inf") if ok_left else (float(hits[0]) if hits.size else float("-inf"))
    upper = float("inf") if ok_right else (float(hits[-1]) if hits.size else float("inf"))
    return lower, upper


class FullConformalOls:
    """Per-training-set state for full-conformal least-squares intervals."""

    def __init__(self, psi: np.ndarray, y: np.ndarray, gram: Gram):
        self.psi = np.asarray(psi, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.inv = gram.inv
        self.coeffs = gram.inv @ (self.psi.T @ self.y)
        self.n = self.psi.shape[0]

    def residual_maps(self, phi: np.ndarray):
        """Intercepts/slopes (A, B) of the n+1 augmented residuals in the trial y."""
        phi = np.asarray(phi, dtype=float)
        t1 = self.inv @ phi
        denom = 1.0 + float(phi @ t1)
        if denom <= SLOPE_TOL:
            raise SingularUpdateError(f"augmented Gram update denominator {denom:.3e}")
        a_coef = self.coeffs - t1 * (float(phi @ self.coeffs) / denom)
        b_coef = t1 / denom
        a_vec = np.concatenate([self.y - self.psi @ a_coef, [-float(phi @ a_coef)]])
        b_vec = np.concatenate([-self.psi @ b_coef, [1.0 / denom]])
        return a_vec, b_vec

    def interval_from_maps(self, a_vec, b_vec, alpha: float,
                           symmetric: bool = False) -> PredictionInterval:
        _check_alpha(alpha)
        n = self.n
        if symmetric:
            return self._symmetric_interval(a_vec, b_vec, alpha)
        k_hi = _upper_index(n, alpha / 2.0)
        k_lo = _lower_index(n, alpha / 2.0)
        gaps = a_vec[:n] - a_vec[n]
        slopes = b_vec[:n] - b_vec[n]
        lower, upper = _scan_candidate_bounds(
            gaps, slopes, n,
            need_ge=(n - k_hi + 1) if k_hi <= n else 0,
            need_le=k_lo,
        )
        return PredictionInterval(lower, upper)

    def _symmetric_interval(self, a_vec, b_vec, alpha: float) -> PredictionInterval:
        """|query residual| <= alpha-quantile of |training residuals|.

        Bound candidates are the crossings R_new = +/- R_i; each is kept
        if conformal there, and the hull of the kept candidates is the
        interval.  O(n^2); only the signed formulation is used in the
        experiment loops.
        """
        n = self.n
        k = _upper_index(n, alpha)
        if k > n:
            return PredictionInterval(float("-inf"), float("inf"))
        den1 = b_vec[n] - b_vec[:n]
        den2 = b_vec[n] + b_vec[:n]
        cands = []
        with np.errstate(divide="ignore", invalid="ignore"):
            y1 = (a_vec[:n] - a_vec[n]) / den1
            y2 = -(a_vec[:n] + a_vec[n]) / den2
        cands = np.concatenate([y1[np.abs(den1) >= SLOPE_TOL], y2[np.abs(den2) >= SLOPE_TOL]])
        if cands.size == 0:
            return PredictionInterval(float("-inf"), float("inf"))
        resid = a_vec[None, :] + np.outer(cands, b_vec)
        abs_train = np.abs(resid[:, :n])
        stat = np.partition(abs_train, k - 1, axis=1)[:, k - 1]
        tol = 1e-9 * (np.abs(stat) + np.max(np.abs(a_vec)) + 1.0)
        ok = np.abs(resid[:, n]) <= stat + tol
        if not ok.any():
            return PredictionInterval(float("-inf"), float("inf"))
        kept = cands[ok]
        # unbounded sides: at |y| -> inf the comparison is decided by slopes
        slope_count = int(np.sum(np.abs(b_vec[:n]) >= abs(b_vec[n]) - SLOPE_TOL))
        unbounded = slope_count >= n - k + 1
        lower = float("-inf") if unbounded else float(np.min(kept))
        upper = float("inf") if unbounded else float(np.max(kept))
        return PredictionInterval(lower, upper)

    def interval(self, phi, alpha: float, symmetric: bool = False) -> PredictionInterval:
        a_vec, b_vec = self.residual_maps(phi)
        return self.interval_from_maps(a_vec, b_vec, alpha, symmetric)

    def batch_intervals(self, phi_mat: np.ndarray, alphas):
        """Signed-score intervals for many query rows at several levels at once.

        Returns (lower, upper) arrays of shape (len(alphas), n_points);
        rows with a singular Gram update come back NaN.  Rows where every
        score gap is strictly decreasing in the trial response (the
        typical geometry: the query residual outgrows every training
        residual) reduce to two order statistics of the candidate values;
        other rows take the exact scalar sweep.
        """
        phi_mat = np.atleast_2d(np.asarray(phi_mat, dtype=float))
        m, n = phi_mat.shape[0], self.n
        t1 = phi_mat @ self.inv                         # (m, P)
        denom = 1.0 + np.einsum("ij,ij->i", t1, phi_mat)
        bad = denom <= SLOPE_TOL
        denom = np.where(bad, 1.0, denom)
        pred_q = phi_mat @ self.coeffs
        proj = pred_q / denom
        r_train = self.y - self.psi @ self.coeffs
        # residual maps collapse to one Gram-propagation matrix:
        #   gap_qi = r_i + (1 + W_qi) * proj_q,  slope_qi = -(1 + W_qi) / denom_q,
        # so the candidate values are pred_q + denom_q * r_i / (1 + W_qi).
        w1 = t1 @ self.psi.T                            # (m, n)
        w1 += 1.0
        plain = (w1 > SLOPE_TOL * denom[:, None]).all(axis=1) & ~bad
        all_plain = bool(plain.all())
        lower = np.full((len(alphas), m), np.nan)
        upper = np.full((len(alphas), m), np.nan)
        slow_rows = np.nonzero(~plain & ~bad)[0]
        slow_data = [(r_train + w1[i] * proj[i], -w1[i] / denom[i]) for i in slow_rows]
        events = w1
        np.divide(r_train[None, :], events, out=events)
        events *= denom[:, None]
        events += pred_q[:, None]
        if not all_plain:
            events[~plain] = np.nan
        sortable = len(alphas) > 1
        if sortable:
            events.sort(axis=1)

        for k, alpha in enumerate(alphas):
            k_hi = _upper_index(n, alpha / 2.0)
            k_lo = _lower_index(n, alpha / 2.0)
            need_ge = n - k_hi + 1 if k_hi <= n else 0
            need_le = k_lo
            if plain.any():
                part = events if all_plain else events[plain]
                if not sortable:
                    kth = []
                    if need_le > 0:
                        kth.append(need_le - 1)
                    if need_ge > 0:
                        kth.append(n - need_ge)
                    if kth:
                        part.partition(sorted(set(kth)), axis=1)
                lo_vals = part[:, need_le - 1] if need_le > 0 else np.full(part.shape[0], -np.inf)
                hi_vals = part[:, n - need_ge] if need_ge > 0 else np.full(part.shape[0], np.inf)
                empty = lo_vals > hi_vals  # conditions cannot hold jointly: fail open
                lower[k, plain] = np.where(empty, -np.inf, lo_vals)
                upper[k, plain] = np.where(empty, np.inf, hi_vals)
            for i, (g_i, s_i) in zip(slow_rows, slow_data):
                lo_i, hi_i = _scan_candidate_bounds(g_i, s_i, n,
                                                    need_ge=need_ge, need_le=need_le)
                lower[k, i] = lo_i
                upper[k, i] = hi_i
        return lower, upper


def full_conformal_ols(psi, y, gram: Gram, phi_star, alpha: float,
                       symmetric: bool = False) -> PredictionInterval:
    """One-shot full-conformal interval for a least-squares fit."""
    return FullConformalOls(psi, y, gram).interval(phi_star, alpha, symmetric)


def jackknife_plus(loo_preds, loo_resid, alpha: float,
                   symmetric: bool = False) -> PredictionInterval:
    """Jackknife+ interval from leave-one-out predictions and signed residuals."""
    _check_alpha(alpha)
    loo_preds = np.asarray(loo_preds, dtype=float)
    loo_resid = np.asarray(loo_resid, dtype=float)
    if loo_preds.shape != loo_resid.shape or loo_preds.size == 0:
        raise ValueError("leave-one-out predictions and residuals must match")
    if symmetric:
        r = np.abs(loo_resid)
        return PredictionInterval(q_minus(loo_preds - r, alpha), q_plus(loo_preds + r, alpha))
    vals = loo_preds + loo_resid
    return PredictionInterval(q_minus(vals, alpha / 2.0), q_plus(vals, alpha / 2.0))


def _ridge_fit(psi: np.ndarray, y: np.ndarray) -> np.ndarray:
    gram = psi.T @ psi
    jitter = 1e-8 * np.trace(gram) / gram.shape[0]
    return np.linalg.solve(gram + jitter * np.eye(gram.shape[0]), psi.T @ y)


def bootstrap_coeffs(psi: np.ndarray, y: np.ndarray, n_boot: int, seed,
                     sparse: bool = False, max_steps=None):
    """Coefficient vectors of surrogates refit on with-replacement resamples.

    Full mode refits OLS on the fixed basis; sparse mode reruns the whole
    Hybrid-LARS selection per resample.  Rank-deficient resamples fall
    back to a ridge-jittered Gram solve; the count is reported in the
    diagnostics dict.
    """
    if n_boot < 2:
        raise ValueError("need at least 2 bootstrap resamples")
    psi = np.asarray(psi, dtype=float)
    y = np.asarray(y, dtype=float)
    n = psi.shape[0]
    rng = rng_from_seed(seed)
    coeffs = np.empty((n_boot, psi.shape[1]))
    ridge_refits = 0
    for b in range(n_boot):
        idx = rng.integers(0, n, size=n)
        psi_b, y_b = psi[idx], y[idx]
        try:
            if sparse:
                coeffs[b] = hybrid_fit(psi_b, y_b, max_steps=max_steps).coeffs
            else:
                c, _ = fit_ols(psi_b, y_b)
                coeffs[b] = c
        except (NumericalError, ValueError):
            coeffs[b] = _ridge_fit(psi_b, y_b)
            ridge_refits += 1
    return coeffs, {"ridge_refits": ridge_refits}


def bootstrap_interval(boot_preds, alpha: float) -> PredictionInterval:
    """Percentile-bootstrap interval from the resampled point predictions."""
    _check_alpha(alpha)
    boot_preds = np.asarray(boot_preds, dtype=float)
    if boot_preds.size < 2:
        raise ValueError("need at least 2 bootstrap predictions")
    return PredictionInterval(q_minus(boot_preds, alpha / 2.0),
                              q_plus(boot_preds, alpha / 2.0))


def _bracket_scale(train_resid: np.ndarray, point_pred: float) -> float:
    rho = q_plus(np.abs(train_resid), 0.05)
    if not np.isfinite(rho):
        rho = float(np.max(np.abs(train_resid)))
    if rho <= 0.0:
        rho = 1e-9 * (1.0 + abs(point_pred))
    return rho


def _new_residual_slope(psi: np.ndarray, phi: np.ndarray, active) -> float:
    """Slope of the query-point residual in the trial response.

    For the active-set least-squares geometry this is 1/(1 + leverage);
    near-interpolating fits make it tiny, which pushes the boundary-
    condition roots far from the point prediction, so the search bracket
    is widened by its inverse.
    """
    if active is None:
        return 1.0
    cols = list(active)
    sub = psi[:, cols]
    try:
        t = np.linalg.solve(sub.T @ sub, phi[cols])
    except np.linalg.LinAlgError:
        return 1.0
    ell = float(phi[cols] @ t)
    if ell < 0:
        return 1.0
    return max(1.0 / (1.0 + ell), 1e-3)


def _isolated_root(bc, lo: float, hi: float, xatol: float, take_last: bool, tol: float):
    """Bounded Brent on bc**2, after isolating a sign change on a coarse grid.

    ``take_last`` picks the rightmost crossing (upper bounds), otherwise
    the leftmost (lower bounds), matching the min/max hull of the
    conformal set.  Without a sign change the whole bracket is searched.
    When the minimizer bottoms out above ``tol`` inside a bracketed sign
    change (a kink of the piecewise-linear condition), the root itself
    is polished by bisection-backed root finding.
    """
    grid = np.linspace(lo, hi, 129)
    vals = np.array([bc(t) for t in grid])
    flips = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)[0]
    if flips.size:
        j = flips[-1] if take_last else flips[0]
        bounds = (float(grid[j]), float(grid[j + 1]))
    else:
        bounds = (lo, hi)
    res = minimize_scalar(lambda t: bc(t) ** 2, bounds=bounds, method="bounded",
                          options={"xatol": xatol, "maxiter": 500})
    x, fun = float(res.x), float(res.fun)
    if fun > tol and flips.size and np.sign(vals[j]) * np.sign(vals[j + 1]) < 0:
        x = float(brentq(bc, bounds[0], bounds[1], xtol=xatol))
        fun = float(bc(x) ** 2)
    return x, fun


def sparse_fc_bounds(psi, y, phi_star, lam: float, alphas, *,
                     point_pred: float, train_resid, active=None,
                     bracket_mult: float = DEFAULT_BRACKET_MULT,
                     obj_tol: float = DEFAULT_OBJ_TOL,
                     symmetric: bool = False,
                     max_breakpoints=None):
    """Sparse full-conformal bounds at several levels over one shared path.

    Builds the augmented-LASSO homotopy path over
    point_pred +/- K*rho/slope, where rho is the upper 5% quantile of the
    |training residuals| and slope the query point's residual slope
    (1/(1+leverage) of the active set, when given): boundary-condition
    roots sit at roughly quantile/slope from the prediction, so the
    leverage factor keeps K*rho generous for near-interpolating fits.
    The squared boundary conditions are minimized with a bounded Brent
    search on the path (after a coarse sign-change isolation, so multiple
    roots resolve to the interval hull).  The bracket widens once
    (K -> 4K) for levels whose conditions cannot be met; levels that
    still fail map to None.
    """
    for alpha in alphas:
        _check_alpha(alpha)
    psi = np.asarray(psi, dtype=float)
    y = np.asarray(y, dtype=float)
    phi_star = np.asarray(phi_star, dtype=float)
    train_resid = np.asarray(train_resid, dtype=float)
    n = y.shape[0]
    rho = _bracket_scale(train_resid, point_pred)
    half0 = bracket_mult * rho / _new_residual_slope(psi, phi_star, active)

    results = [None] * len(alphas)
    errors = [None] * len(alphas)
    pending = list(range(len(alphas)))
    for half in (half0, 4.0 * half0):
        if not pending:
            break
        lo = point_pred - half
        hi = point_pred + half
        try:
            path = homotopy_path(psi, y, phi_star, lam, (lo, hi), max_breakpoints)
        except Exception as exc:
            for k in pending:
                errors[k] = exc
            continue
        xatol = 1e-9 * (hi - lo) + 1e-14
        tol = obj_tol * rho**2
        still = []
        for k in pending:
            alpha = alphas[k]
            if symmetric:
                def bc_up(t, _a=alpha):
                    return abs(t - path.prediction_at(t)) - q_plus(np.abs(path.residuals_at(t)), _a)

                bc_lo = bc_up
                bounds_up = (point_pred, hi)
                bounds_lo = (lo, point_pred)
                upper_unbounded = lower_unbounded = _upper_index(n, alpha) > n
            else:
                def bc_up(t, _a=alpha):
                    return (t - path.prediction_at(t)) - q_plus(path.residuals_at(t), _a / 2.0)

                def bc_lo(t, _a=alpha):
                    return (t - path.prediction_at(t)) - q_minus(path.residuals_at(t), _a / 2.0)

                bounds_up = bounds_lo = (lo, hi)
                upper_unbounded = _upper_index(n, alpha / 2.0) > n
                lower_unbounded = _lower_index(n, alpha / 2.0) < 1
            if upper_unbounded:
                up_val, up_obj = float("inf"), 0.0
            else:
                up_val, up_obj = _isolated_root(bc_up, *bounds_up, xatol=xatol,
                                                take_last=True, tol=tol)
            if lower_unbounded:
                lo_val, lo_obj = float("-inf"), 0.0
            else:
                lo_val, lo_obj = _isolated_root(bc_lo, *bounds_lo, xatol=xatol,
                                                take_last=False, tol=tol)
            if up_obj <= tol and lo_obj <= tol:
                results[k] = PredictionInterval(min(lo_val, up_val), max(lo_val, up_val))
            else:
                errors[k] = BracketFailureError(
                    f"boundary-condition residuals ({lo_obj:.3e}, {up_obj:.3e}) exceed "
                    f"{tol:.3e} with bracket half-width {half:.3g}")
                still.append(k)
        pending = still
    return results, errors


def full_conformal_sparse(psi, y, phi_star, lam: float, alpha: float, *,
                          point_pred: float, train_resid, active=None,
                          bracket_mult: float = DEFAULT_BRACKET_MULT,
                          obj_tol: float = DEFAULT_OBJ_TOL,
                          symmetric: bool = False,
                          max_breakpoints=None) -> PredictionInterval:
    """Full-conformal interval for a sparse fit at its frozen penalty.

    Single-level convenience over :func:`sparse_fc_bounds`; raises
    :class:`BracketFailureError` when the bound search fails even after
    the bracket widening.
    """
    results, errors = sparse_fc_bounds(
        psi, y, phi_star, lam, [alpha], point_pred=point_pred, train_resid=train_resid,
        active=active, bracket_mult=bracket_mult, obj_tol=obj_tol,
        symmetric=symmetric, max_breakpoints=max_breakpoints)
    if results[0] is None:
        err = errors[0]
        if isinstance(err, BracketFailureError):
            raise err
        raise BracketFailureError(f"sparse full-conformal search failed: {err}") from err
    return results[0]
