"""Slow, independent reference implementations for self-tests.

Everything here deliberately avoids the production code paths: grid
search refits every trial response from scratch with `lstsq`,
leave-one-out refits are explicit, the augmented Gram is inverted
directly, and the LASSO solver is plain coordinate descent with a
duality-gap stop.  The `validate` CLI command and the test suite compare
the fast implementations against these.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "fc_grid_search",
    "explicit_loo",
    "direct_augmented_inverse",
    "cd_lasso",
]


def fc_grid_search(psi, y, phi_star, alpha, lo, hi, n_grid=100_000, symmetric=False,
                   batch=4096):
    """Full conformal by brute force: refit at every grid point.

    Each trial response is refit through the pseudo-inverse of the
    augmented design (no rank-one shortcuts, no residual linearization);
    trial responses are processed in batches purely for array throughput.
    Returns (lower, upper) over the conformal trial values, with
    (-inf, inf) markers at the grid edges or outside the quantile range.
    Resolution is one grid cell.
    """
    psi = np.asarray(psi, dtype=float)
    y = np.asarray(y, dtype=float)
    phi_star = np.asarray(phi_star, dtype=float)
    n = y.shape[0]
    psi_aug = np.vstack([psi, phi_star])
    pinv = np.linalg.pinv(psi_aug)
    grid = np.linspace(lo, hi, n_grid)
    if symmetric:
        k = int(np.ceil((1.0 - alpha) * (n + 1) - 1e-9))
        if k > n:
            return float("-inf"), float("inf")
    else:
        k_hi = int(np.ceil((1.0 - alpha / 2.0) * (n + 1) - 1e-9))
        k_lo = int(np.floor(alpha / 2.0 * (n + 1) + 1e-9))
    ok_all = np.empty(n_grid, dtype=bool)
    for start in range(0, n_grid, batch):
        chunk = grid[start:start + batch]
        y_aug = np.tile(np.concatenate([y, [0.0]])[:, None], (1, chunk.size))
        y_aug[n, :] = chunk
        resid = y_aug - psi_aug @ (pinv @ y_aug)           # (n+1, b)
        new = resid[n]
        if symmetric:
            train = np.sort(np.abs(resid[:n]), axis=0)
            stat = train[k - 1]
            ok = np.abs(new) <= stat + 1e-12 * (1 + np.abs(stat))
        else:
            train = np.sort(resid[:n], axis=0)
            ok = np.ones(chunk.size, dtype=bool)
            if k_hi <= n:
                stat = train[k_hi - 1]
                ok &= new <= stat + 1e-12 * (1 + np.abs(stat))
            if k_lo >= 1:
                stat = train[k_lo - 1]
                ok &= new >= stat - 1e-12 * (1 + np.abs(stat))
        ok_all[start:start + chunk.size] = ok
    hits = np.nonzero(ok_all)[0]
    if hits.size == 0:
        return float("-inf"), float("inf")
    lower = float("-inf") if hits[0] == 0 else float(grid[hits[0]])
    upper = float("inf") if hits[-1] == n_grid - 1 else float(grid[hits[-1]])
    return lower, upper


def explicit_loo(psi, y):
    """Leave-one-out refits by construction: (coeff matrix (n, P), signed residuals)."""
    psi = np.asarray(psi, dtype=float)
    y = np.asarray(y, dtype=float)
    n = psi.shape[0]
    coefs = np.empty((n, psi.shape[1]))
    resid = np.empty(n)
    mask = np.ones(n, dtype=bool)
    for i in range(n):
        mask[i] = False
        coefs[i] = np.linalg.lstsq(psi[mask], y[mask], rcond=None)[0]
        mask[i] = True
        resid[i] = y[i] - psi[i] @ coefs[i]
    return coefs, resid


def direct_augmented_inverse(psi, phi):
    """Inverse of the Gram of [psi; phi] by plain matrix inversion."""
    psi_aug = np.vstack([np.asarray(psi, dtype=float), np.asarray(phi, dtype=float)])
    return np.linalg.inv(psi_aug.T @ psi_aug)


def cd_lasso(psi, y, lam, tol=1e-10, max_iter=100_000):
    """Coordinate descent for 0.5*||psi c - y||^2 + lam*||c_{1:}||_1.

    The constant column is unpenalized (handled by exact centering).
    Stops when the duality gap falls below tol * 0.5 * ||y_centered||^2.
    Returns the full-length coefficient vector.
    """
    psi = np.asarray(psi, dtype=float)
    y = np.asarray(y, dtype=float)
    x = psi[:, 1:]
    col_mean = x.mean(axis=0)
    z = x - col_mean
    v = y - y.mean()
    m = z.shape[1]
    norms = np.einsum("ij,ij->j", z, z)
    beta = np.zeros(m)
    r = v.copy()
    v_sq = 0.5 * float(v @ v) or 1.0

    def duality_gap():
        primal = 0.5 * float(r @ r) + lam * float(np.sum(np.abs(beta)))
        ztr = z.T @ r
        s = min(1.0, lam / max(float(np.max(np.abs(ztr))), 1e-300)) if lam > 0 else 0.0
        theta = s * r
        dual = 0.5 * float(v @ v) - 0.5 * float((v - theta) @ (v - theta))
        return primal - dual

    if lam == 0.0:
        beta = np.linalg.lstsq(z, v, rcond=None)[0]
    else:
        for sweep in range(max_iter):
            for j in range(m):
                if norms[j] == 0.0:
                    continue
                b_old = beta[j]
                rho = float(z[:, j] @ r) + norms[j] * b_old
                b_new = np.sign(rho) * max(abs(rho) - lam, 0.0) / norms[j]
                if b_new != b_old:
                    r += z[:, j] * (b_old - b_new)
                    beta[j] = b_new
            if sweep % 5 == 4 or sweep < 2:
                if duality_gap() <= tol * v_sq:
                    break
    out = np.empty(psi.shape[1])
    out[0] = (y.mean() - col_mean @ beta) / psi[0, 0]
    out[1:] = beta
    return out
