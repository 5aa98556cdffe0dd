"""Least-angle regression machinery for sparse expansions.

The solver operates on a regression matrix whose column 0 is the
(orthonormal) constant.  The constant is never penalized: the response
and the remaining columns are centered, LARS runs on the centered
system, and intercepts are reconstructed exactly.  Ties in the
correlation step break deterministically toward the lowest column
index, so the path is invariant to row order.

Two path modes exist:

* plain LARS (strictly growing active sets), used for Hybrid selection:
  at every step the active set is OLS-refit and scored by the analytic
  leave-one-out error;
* LASSO-modified LARS (sign-change drops), used to solve the penalized
  problem  0.5 * ||Psi c - y||^2 + lam * ||c_{1:}||_1  at a fixed
  penalty, which seeds the trial-response homotopy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import CollinearityError, DegenerateLeverageError
from .pce import fit_ols, loo_residuals

__all__ = [
    "LarsStep",
    "LarsPath",
    "SparsePceModel",
    "lars_path",
    "hybrid_select",
    "pseudo_lambda",
    "lasso_at",
    "refit_at_count",
    "sparse_loo_fits",
    "hybrid_fit",
]

CORR_TIE_REL = 1e-10
GAMMA_TOL = 1e-12


@dataclass(frozen=True)
class LarsStep:
    active: tuple            # psi column indices incl. 0, in entry order
    lars_coeffs: np.ndarray  # length-P LARS coefficients at this knot
    ols_coeffs: np.ndarray   # length-P OLS refit on the active set
    loo_error: float         # relative leave-one-out error of the refit


@dataclass
class LarsPath:
    steps: List[LarsStep]
    selected_step: int = -1
    dropped: bool = False    # whether any LASSO drop occurred (lasso mode)


@dataclass(frozen=True)
class SparsePceModel:
    """Hybrid-LARS result: active columns, OLS-refit coefficients, pseudo-penalty."""

    active: tuple
    coeffs: np.ndarray
    lambda_hat: float
    loo_error: float
    basis: object = None

    def predict(self, x) -> np.ndarray:
        if self.basis is None:
            raise ValueError("matrix-level model has no basis attached")
        return self.basis.eval(x) @ self.coeffs


def _center(psi: np.ndarray, y: np.ndarray):
    if not np.allclose(psi[:, 0], psi[0, 0]) or psi[0, 0] == 0:
        raise ValueError("column 0 must be the constant regressor")
    x_nc = psi[:, 1:]
    col_mean = x_nc.mean(axis=0)
    return x_nc - col_mean, col_mean, y - y.mean(), float(y.mean())


def _full_coeffs(beta: np.ndarray, col_mean: np.ndarray, y_mean: float, const_val: float) -> np.ndarray:
    """Map centered-space coefficients back to the raw basis (exact intercept)."""
    out = np.empty(beta.shape[0] + 1)
    out[0] = (y_mean - col_mean @ beta) / const_val
    out[1:] = beta
    return out


def _equiangular(xc: np.ndarray, active: list, signs: np.ndarray):
    xa = xc[:, active] * signs[None, :]
    gram = xa.T @ xa
    try:
        w1 = np.linalg.solve(gram, np.ones(len(active)))
    except np.linalg.LinAlgError:
        raise CollinearityError(f"active columns {active} are collinear") from None
    total = float(np.ones(len(active)) @ w1)
    if total <= 0:
        raise CollinearityError(f"active columns {active} are numerically collinear")
    aa = 1.0 / np.sqrt(total)
    w = aa * w1
    u = xa @ w
    return w, u, aa


def _lars_engine(xc: np.ndarray, yc: np.ndarray, max_active: int, lasso: bool,
                 stop_lambda: Optional[float] = None):
    """LARS / LASSO-LARS on a centered system.

    Returns (knots, any_drop) where each knot is (active list, beta copy,
    correlation level after the move).  In lasso mode with
    ``stop_lambda`` the walk terminates exactly at that penalty, emitting
    the interpolated solution as the final knot.
    """
    m = xc.shape[1]
    beta = np.zeros(m)
    active: list = []
    is_active = np.zeros(m, dtype=bool)
    knots: list = []
    any_drop = False
    drop_pending = False
    scale = float(np.linalg.norm(yc)) or 1.0

    for _ in range(8 * m + 16):
        c = xc.T @ (yc - xc @ beta)
        corr = float(np.max(np.abs(c[active]))) if active else 0.0
        inact = ~is_active
        c_inact_max = float(np.max(np.abs(c[inact]))) if inact.any() else 0.0
        if not active:
            corr = c_inact_max

        if stop_lambda is not None and corr <= stop_lambda * (1 + 1e-12) + 1e-15 * scale:
            knots.append((list(active), beta.copy(), corr))
            return knots, any_drop
        if corr <= 1e-12 * scale:
            return knots, any_drop

        can_add = (not drop_pending and inact.any() and len(active) < max_active
                   and (not active or c_inact_max >= corr * (1.0 - CORR_TIE_REL)))
        if can_add:
            thresh = c_inact_max * (1.0 - CORR_TIE_REL)
            j_new = int(np.nonzero(inact & (np.abs(c) >= thresh))[0][0])
            active.append(j_new)
            is_active[j_new] = True
        drop_pending = False

        signs = np.sign(c[active])
        signs[signs == 0] = 1.0
        w, u, aa = _equiangular(xc, active, signs)
        corr = float(np.max(np.abs(c[active])))
        a = xc.T @ u

        gamma_enter = corr / aa  # full move: correlations reach zero
        inact = ~is_active
        if len(active) < max_active and inact.any():
            cj = c[inact]
            aj = a[inact]
            with np.errstate(divide="ignore", invalid="ignore"):
                cands = np.concatenate([(corr - cj) / (aa - aj), (corr + cj) / (aa + aj)])
            cands = cands[np.isfinite(cands) & (cands > GAMMA_TOL)]
            if cands.size:
                gamma_enter = min(gamma_enter, float(np.min(cands)))

        gamma = gamma_enter
        drop_pos = -1
        if lasso:
            direction = signs * w
            for pos, j in enumerate(active):
                if direction[pos] != 0.0:
                    g = -beta[j] / direction[pos]
                    if GAMMA_TOL < g < gamma - GAMMA_TOL:
                        gamma = g
                        drop_pos = pos

        if stop_lambda is not None:
            gamma_stop = (corr - stop_lambda) / aa
            if 0.0 <= gamma_stop <= gamma:
                beta[active] += gamma_stop * signs * w
                knots.append((list(active), beta.copy(), stop_lambda))
                return knots, any_drop

        beta[active] += gamma * signs * w
        level = corr - gamma * aa
        if drop_pos >= 0:
            j_drop = active.pop(drop_pos)
            is_active[j_drop] = False
            beta[j_drop] = 0.0
            any_drop = True
            drop_pending = True
        knots.append((list(active), beta.copy(), level))

        if not lasso and len(active) >= max_active:
            return knots, any_drop
    raise CollinearityError("LARS failed to terminate (cycling active set)")


def _refit_with_loo(psi: np.ndarray, y: np.ndarray, cols) -> tuple:
    """OLS refit on the given psi columns plus its relative LOO error."""
    sub = psi[:, cols]
    coeffs_sub, gram = fit_ols(sub, y)
    try:
        loo = loo_residuals(gram, sub, y, coeffs_sub)
        denom = float(np.var(y)) or 1.0
        err = float(np.mean(loo**2) / denom)
    except DegenerateLeverageError:
        err = float("inf")
    full = np.zeros(psi.shape[1])
    full[list(cols)] = coeffs_sub
    return full, err


def lars_path(psi: np.ndarray, y: np.ndarray, max_steps: Optional[int] = None,
              lasso: bool = False) -> LarsPath:
    """Walk the (Hybrid) LARS path on a regression matrix with constant column 0.

    Each knot carries the OLS refit on {0} + active and its analytic LOO
    error.  ``max_steps`` caps the number of non-constant regressors; it
    defaults to min(n-1, P) - 1 so every refit stays overdetermined.
    """
    psi = np.asarray(psi, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = psi.shape
    cap = min(n - 1, p) - 1
    if max_steps is not None:
        cap = min(cap, max_steps)
    if cap < 1:
        raise ValueError("design too small for any non-constant regressor")
    xc, col_mean, yc, y_mean = _center(psi, y)
    knots, dropped = _lars_engine(xc, yc, cap, lasso=lasso)

    steps = []
    for active_nc, beta, _ in knots:
        cols = (0,) + tuple(j + 1 for j in active_nc)
        lars_full = _full_coeffs(beta, col_mean, y_mean, psi[0, 0])
        ols_full, err = _refit_with_loo(psi, y, cols)
        steps.append(LarsStep(active=cols, lars_coeffs=lars_full, ols_coeffs=ols_full, loo_error=err))
    if not steps:
        raise ValueError("LARS produced no steps (response already constant?)")
    return LarsPath(steps=steps, dropped=dropped)


def hybrid_select(path: LarsPath, psi: np.ndarray, y: np.ndarray,
                  basis=None) -> SparsePceModel:
    """Pick the knot with minimal LOO error and return its OLS refit."""
    errs = np.array([s.loo_error for s in path.steps])
    if not np.isfinite(errs).any():
        raise ValueError("all LARS steps degenerate; no selectable model")
    best = int(np.argmin(errs))
    path.selected_step = best
    step = path.steps[best]
    lam = pseudo_lambda(psi, y, step.ols_coeffs)
    return SparsePceModel(active=step.active, coeffs=step.ols_coeffs,
                          lambda_hat=lam, loo_error=step.loo_error, basis=basis)


def pseudo_lambda(psi: np.ndarray, y: np.ndarray, coeffs: np.ndarray) -> float:
    """Penalty at which the given fit is stationary for the L1 problem.

    max over columns of | psi_j . (psi @ coeffs - y) |; zero exactly for
    the full-basis OLS solution.
    """
    grad = np.asarray(psi).T @ (np.asarray(psi) @ coeffs - np.asarray(y))
    return float(np.max(np.abs(grad)))


def lasso_at(psi: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    """Exact solution of 0.5*||psi c - y||^2 + lam*||c_{1:}||_1 via LASSO-LARS.

    The constant column is unpenalized; returns the full-length
    coefficient vector.
    """
    psi = np.asarray(psi, dtype=float)
    y = np.asarray(y, dtype=float)
    if lam < 0:
        raise ValueError("lam must be >= 0")
    xc, col_mean, yc, y_mean = _center(psi, y)
    cap = min(psi.shape[0] - 1, psi.shape[1] - 1)
    knots, _ = _lars_engine(xc, yc, cap, lasso=True, stop_lambda=lam)
    if not knots:
        beta = np.zeros(psi.shape[1] - 1)
    else:
        beta = knots[-1][1]
    return _full_coeffs(beta, col_mean, y_mean, psi[0, 0])


def refit_at_count(psi_aug: np.ndarray, y_aug: np.ndarray, k: int) -> np.ndarray:
    """LARS on the (augmented) data truncated at k active regressors, OLS refit.

    k counts the constant; if the path terminates early the largest
    available active set is used.
    """
    if k < 1 or k > min(psi_aug.shape[0], psi_aug.shape[1]):
        raise ValueError(f"k={k} outside [1, min(n, P)]")
    if k == 1:
        full, _ = _refit_with_loo(np.asarray(psi_aug, float), np.asarray(y_aug, float), (0,))
        return full
    path = lars_path(psi_aug, y_aug, max_steps=k - 1)
    sizes = np.array([len(s.active) for s in path.steps])
    pos = int(np.nonzero(sizes <= k)[0][-1])
    return path.steps[pos].ols_coeffs


def hybrid_fit(psi: np.ndarray, y: np.ndarray, basis=None,
               max_steps: Optional[int] = None) -> SparsePceModel:
    """Convenience: full Hybrid-LARS fit (path + selection)."""
    path = lars_path(psi, y, max_steps=max_steps)
    return hybrid_select(path, psi, y, basis=basis)


def sparse_loo_fits(psi: np.ndarray, y: np.ndarray):
    """Independent Hybrid-LARS refits with each training point left out.

    Returns (coeff matrix of shape (n, P), signed LOO residuals); this is
    the symmetric-in-the-data construction the jackknife engine needs for
    sparse expansions.
    """
    psi = np.asarray(psi, dtype=float)
    y = np.asarray(y, dtype=float)
    n = psi.shape[0]
    coefs = np.empty((n, psi.shape[1]))
    resid = np.empty(n)
    mask = np.ones(n, dtype=bool)
    for i in range(n):
        mask[i] = False
        model_i = hybrid_fit(psi[mask], y[mask])
        mask[i] = True
        coefs[i] = model_i.coeffs
        resid[i] = y[i] - psi[i] @ model_i.coeffs
    return coefs, resid
