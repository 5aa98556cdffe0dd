"""Oracle-equivalence self tests behind the ``confpce validate`` command.

Each check compares a fast production path against an independent slow
reference from :mod:`confpce.oracles` on a fixed random instance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .benchmarks import ishigami
from .conformal import FullConformalOls
from .homotopy import homotopy_path
from .inputs import InputModel, Uniform, rng_from_seed
from .oracles import cd_lasso, direct_augmented_inverse, explicit_loo, fc_grid_search
from .pce import PceBasis, fit_ols, loo_models, loo_residuals, sm_augment
from .sparse import hybrid_fit, lasso_at


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _random_design(n, p, seed):
    rng = rng_from_seed(seed)
    return np.column_stack([np.ones(n), rng.standard_normal((n, p - 1))])


def check_sherman_morrison() -> CheckResult:
    rng = rng_from_seed(101)
    psi = _random_design(50, 20, 102)
    y = rng.standard_normal(50)
    _, gram = fit_ols(psi, y)
    worst = 0.0
    for _ in range(5):
        phi = np.concatenate([[1.0], rng.standard_normal(19)])
        worst = max(worst, float(np.max(np.abs(
            sm_augment(gram, phi).inv - direct_augmented_inverse(psi, phi)))))
    return CheckResult("sherman-morrison vs direct inverse", worst < 1e-8, f"max abs err {worst:.2e}")


def check_loo() -> CheckResult:
    rng = rng_from_seed(201)
    psi = _random_design(40, 10, 202)
    y = rng.standard_normal(40)
    coeffs, gram = fit_ols(psi, y)
    ref_coefs, ref_resid = explicit_loo(psi, y)
    err = max(float(np.max(np.abs(loo_residuals(gram, psi, y, coeffs) - ref_resid))),
              float(np.max(np.abs(loo_models(gram, psi, y) - ref_coefs))))
    return CheckResult("analytic leave-one-out vs explicit refits", err < 1e-8, f"max abs err {err:.2e}")


def check_full_conformal() -> CheckResult:
    model = InputModel([Uniform(-np.pi, np.pi)] * 3)
    basis = PceBasis.total_degree(model, 3)
    x = model.sample_mc(60, 301)
    y = ishigami(x)
    _, gram = fit_ols(basis.eval(x), y)
    psi = basis.eval(x)
    engine = FullConformalOls(psi, y, gram)
    coeffs = gram.inv @ (psi.T @ y)
    span = 3.0 * float(np.max(np.abs(y))) + 5.0
    n_grid = 100_001
    worst = 0.0
    queries = model.sample_mc(5, 302)
    for i in range(queries.shape[0]):
        phi = basis.eval(queries[i])
        iv = engine.interval(phi, 0.1)
        pred = float(phi @ coeffs)
        g_lo, g_hi = fc_grid_search(psi, y, phi, 0.1, pred - span, pred + span, n_grid=n_grid)
        cell = 2.0 * span / (n_grid - 1)
        worst = max(worst, abs(iv.lower - g_lo), abs(iv.upper - g_hi))
    return CheckResult("full conformal vs grid search", worst <= 1.5 * cell,
                       f"max bound gap {worst:.2e} (grid cell {cell:.2e})")


def check_homotopy() -> CheckResult:
    rng = rng_from_seed(401)
    psi = _random_design(35, 13, 402)
    beta = np.zeros(13)
    beta[[1, 4, 7]] = [2.0, -1.5, 1.0]
    y = psi @ beta + 0.3 * rng.standard_normal(35)
    phi_new = np.concatenate([[1.0], rng.standard_normal(12)])
    worst = 0.0
    for lam in (0.4, 2.0):
        path = homotopy_path(psi, y, phi_new, lam, (-12.0, 12.0))
        for y_trial in rng.uniform(-12.0, 12.0, 10):
            ref = cd_lasso(np.vstack([psi, phi_new]), np.concatenate([y, [y_trial]]), lam, tol=1e-13)
            worst = max(worst, float(np.max(np.abs(path.coeffs_at(y_trial) - ref))))
    return CheckResult("trial-response homotopy vs coordinate descent", worst < 1e-6,
                       f"max coeff err {worst:.2e}")


def check_lasso_at() -> CheckResult:
    rng = rng_from_seed(501)
    psi = _random_design(40, 12, 502)
    beta = np.zeros(12)
    beta[[2, 5, 9]] = [3.0, -2.0, 1.5]
    y = psi @ np.concatenate([[0.7], beta[1:]]) + 0.1 * rng.standard_normal(40)
    worst = max(float(np.max(np.abs(lasso_at(psi, y, lam) - cd_lasso(psi, y, lam, tol=1e-13))))
                for lam in (0.0, 0.5, 2.0, 8.0))
    return CheckResult("lasso-lars at fixed penalty vs coordinate descent", worst < 1e-6,
                       f"max coeff err {worst:.2e}")


def check_permutation_invariance() -> CheckResult:
    model = InputModel([Uniform(-np.pi, np.pi)] * 3)
    basis = PceBasis.total_degree(model, 5)
    x = model.sample_lhs(40, 601)
    y = ishigami(x)
    psi = basis.eval(x)
    fit = hybrid_fit(psi, y)
    rng = rng_from_seed(602)
    worst = 0.0
    same = True
    for _ in range(3):
        perm = rng.permutation(40)
        fit_p = hybrid_fit(psi[perm], y[perm])
        same &= set(fit.active) == set(fit_p.active)
        worst = max(worst, float(np.max(np.abs(fit.coeffs - fit_p.coeffs))))
    return CheckResult("hybrid selection row-permutation invariance", same and worst < 1e-10,
                       f"active sets equal: {same}, max coeff diff {worst:.2e}")


def run_all():
    return [
        check_sherman_morrison(),
        check_loo(),
        check_full_conformal(),
        check_homotopy(),
        check_lasso_at(),
        check_permutation_invariance(),
    ]
