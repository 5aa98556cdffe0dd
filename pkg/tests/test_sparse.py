import numpy as np
import pytest

from confpce import (
    PceBasis,
    benchmark_registry,
    fit_ols,
    hybrid_fit,
    hybrid_select,
    ishigami,
    lars_path,
    lasso_at,
    pseudo_lambda,
    refit_at_count,
    sparse_loo_fits,
)
from confpce.inputs import rng_from_seed
from confpce.oracles import cd_lasso, explicit_loo
from conftest import random_regression


def test_single_regressor_enters_first():
    rng = rng_from_seed(3)
    psi = np.column_stack([np.ones(30), rng.standard_normal((30, 6))])
    y = 2.5 * psi[:, 4] + 1.0
    path = lars_path(psi, y)
    assert path.steps[0].active == (0, 4)
    fit = hybrid_select(path, psi, y)
    assert fit.active == (0, 4)
    assert np.isclose(fit.coeffs[4], 2.5, atol=1e-10)
    assert np.isclose(fit.coeffs[0], 1.0, atol=1e-10)


def test_orthogonal_design_entry_order():
    # with exactly orthonormal centered columns, LARS enters variables in
    # descending |psi_j . y| order (closed-form LARS on orthogonal designs)
    rng = rng_from_seed(4)
    n, m = 32, 8
    base = rng.standard_normal((n, m))
    base -= base.mean(axis=0)
    q, _ = np.linalg.qr(base)
    psi = np.column_stack([np.ones(n), q])
    weights = np.array([5.0, -4.0, 3.2, -2.5, 1.9, -1.2, 0.7, 0.3])
    y = q @ weights
    path = lars_path(psi, y)
    entered = []
    for step in path.steps:
        for col in step.active:
            if col != 0 and col not in entered:
                entered.append(col)
    expected = list(1 + np.argsort(-np.abs(q.T @ y)))
    assert entered == expected[: len(entered)]


def test_ishigami_sparse_selection_size():
    bench = benchmark_registry("ishigami")
    basis = PceBasis.total_degree(bench.input_model, 6)
    x = bench.input_model.sample_lhs(40, 2027)
    psi = basis.eval(x)
    path = lars_path(psi, bench(x))
    fit = hybrid_select(path, psi, bench(x))
    assert 10 <= len(fit.active) <= 40


def test_borehole_sparse_selection_size():
    bench = benchmark_registry("borehole")
    basis = PceBasis.total_degree(bench.input_model, 2)
    x = bench.input_model.sample_lhs(40, 11)
    psi = basis.eval(x)
    fit = hybrid_fit(psi, bench(x))
    assert 10 <= len(fit.active) <= 40


def test_hybrid_select_is_argmin():
    psi, y, _ = random_regression(40, 12, 5)
    path = lars_path(psi, y)
    fit = hybrid_select(path, psi, y)
    errs = [s.loo_error for s in path.steps]
    assert path.selected_step == int(np.argmin(errs))
    assert fit.loo_error == min(errs)


def test_noiseless_sparse_target_recovery():
    psi, y, beta = random_regression(50, 15, 6, noise=0.0)
    fit = hybrid_fit(psi, y)
    support = {j for j in range(15) if beta[j] != 0.0}
    assert support <= set(fit.active)
    assert np.max(np.abs(psi @ fit.coeffs - y)) < 1e-8


def test_path_mse_nonincreasing():
    psi, y, _ = random_regression(45, 14, 7)
    path = lars_path(psi, y)
    mses = [np.mean((psi @ s.lars_coeffs - y) ** 2) for s in path.steps]
    assert all(a >= b - 1e-12 for a, b in zip(mses, mses[1:]))


def test_hybrid_refit_residual_orthogonal_to_active():
    psi, y, _ = random_regression(45, 14, 8)
    path = lars_path(psi, y)
    for step in path.steps:
        resid = y - psi @ step.ols_coeffs
        corr = psi[:, list(step.active)].T @ resid
        assert np.max(np.abs(corr)) < 1e-8 * max(1.0, np.linalg.norm(y))


def test_pseudo_lambda_zero_at_full_ols():
    psi, y, _ = random_regression(40, 8, 9)
    coeffs, _ = fit_ols(psi, y)
    assert pseudo_lambda(psi, y, coeffs) < 1e-8


def test_pseudo_lambda_at_origin_centered_response():
    psi, y, _ = random_regression(40, 8, 10)
    y = y - y.mean()
    lam = pseudo_lambda(psi, y, np.zeros(8))
    assert np.isclose(lam, np.max(np.abs(psi.T @ y)))


def test_pseudo_lambda_nonnegative_and_zero_iff_stationary():
    psi, y, _ = random_regression(40, 8, 11)
    rng = rng_from_seed(12)
    for _ in range(10):
        c = rng.standard_normal(8)
        assert pseudo_lambda(psi, y, c) >= 0.0
    coeffs, _ = fit_ols(psi, y)
    assert pseudo_lambda(psi, y, coeffs) < 1e-8
    assert pseudo_lambda(psi, y, coeffs + 0.01) > 1e-4


def test_lasso_knot_pseudo_lambda_consistency():
    # at a LASSO-LARS knot the stationarity penalty equals the knot level
    psi, y, _ = random_regression(40, 12, 13)
    from confpce.sparse import _center, _lars_engine, _full_coeffs
    xc, col_mean, yc, y_mean = _center(psi, y)
    knots, _ = _lars_engine(xc, yc, 10, lasso=True)
    for active, beta, level in knots[:6]:
        if level <= 1e-10:
            continue
        full = _full_coeffs(beta, col_mean, y_mean, psi[0, 0])
        assert np.isclose(pseudo_lambda(psi, y, full), level, rtol=1e-6)


def test_lasso_at_matches_coordinate_descent():
    psi, y, _ = random_regression(40, 13, 14)
    for lam in (0.0, 0.4, 2.0, 9.0, 40.0):
        a = lasso_at(psi, y, lam)
        b = cd_lasso(psi, y, lam, tol=1e-13)
        assert np.max(np.abs(a - b)) < 1e-6


def test_refit_at_count_self_consistency():
    bench = benchmark_registry("ishigami")
    basis = PceBasis.total_degree(bench.input_model, 5)
    x = bench.input_model.sample_lhs(40, 15)
    psi = basis.eval(x)
    y = bench(x)
    fit = hybrid_fit(psi, y)
    again = refit_at_count(psi, y, len(fit.active))
    assert np.max(np.abs(again - fit.coeffs)) < 1e-10


def test_refit_at_count_single_regressor_recovery():
    rng = rng_from_seed(16)
    psi = np.column_stack([np.ones(30), rng.standard_normal((30, 6))])
    y = 3.0 * psi[:, 2]
    got = refit_at_count(psi, y, 2)
    expected = np.zeros(7)
    expected[2] = 3.0
    assert np.max(np.abs(got - expected)) < 1e-10


def test_refit_at_count_bounds():
    psi, y, _ = random_regression(30, 8, 17)
    with pytest.raises(ValueError):
        refit_at_count(psi, y, 0)
    with pytest.raises(ValueError):
        refit_at_count(psi, y, 9)


def test_permutation_invariance_of_selection():
    bench = benchmark_registry("ishigami")
    basis = PceBasis.total_degree(bench.input_model, 5)
    x = bench.input_model.sample_lhs(40, 18)
    psi = basis.eval(x)
    y = bench(x)
    fit = hybrid_fit(psi, y)
    rng = rng_from_seed(19)
    for _ in range(4):
        perm = rng.permutation(40)
        fit_p = hybrid_fit(psi[perm], y[perm])
        assert set(fit_p.active) == set(fit.active)
        assert np.max(np.abs(fit_p.coeffs - fit.coeffs)) < 1e-10


def test_sparse_loo_fits_shapes_and_meaning():
    psi, y, _ = random_regression(25, 10, 20, noise=0.5)
    coefs, resid = sparse_loo_fits(psi, y)
    assert coefs.shape == (25, 10)
    mask = np.ones(25, dtype=bool)
    for i in (0, 7, 24):
        mask[i] = False
        refit = hybrid_fit(psi[mask], y[mask])
        mask[i] = True
        assert np.array_equal(coefs[i], refit.coeffs)
        assert np.isclose(resid[i], y[i] - psi[i] @ refit.coeffs)


def test_alg3_reference_vs_homotopy_bounds():
    # the frozen-penalty homotopy engine approximates the literal
    # refit-at-count search; on a moderate-sparsity fit the bounds agree
    # to within a few percent of the interval width
    from confpce import full_conformal_sparse
    from confpce.conformal import q_minus, q_plus
    bench = benchmark_registry("ishigami")
    basis = PceBasis.total_degree(bench.input_model, 6)
    x = bench.input_model.sample_lhs(40, (77, (0,)))
    psi = basis.eval(x)
    y = bench(x)
    fit = hybrid_fit(psi, y)
    assert len(fit.active) <= 26, "reference comparison assumes moderate sparsity"
    resid = y - psi @ fit.coeffs
    queries = bench.input_model.sample_mc(10, 5150)
    n = 40
    for i in range(10):
        phi = basis.eval(queries[i])
        pred = float(phi @ fit.coeffs)
        iv = full_conformal_sparse(psi, y, phi, fit.lambda_hat, 0.1, point_pred=pred,
                                   train_resid=resid, active=fit.active)
        # literal inner loop: LARS truncation + OLS refit per trial value
        psi_aug = np.vstack([psi, phi])
        grid = np.linspace(iv.lower - 2 * iv.width, iv.upper + 2 * iv.width, 600)
        keep = []
        for t in grid:
            y_aug = np.concatenate([y, [t]])
            try:
                coefs = refit_at_count(psi_aug, y_aug, len(fit.active))
            except Exception:
                continue
            r = y_aug - psi_aug @ coefs
            if q_minus(r[:n], 0.05) <= r[n] <= q_plus(r[:n], 0.05):
                keep.append(t)
        assert keep, "reference search found no conformal values"
        ref_lo, ref_hi = keep[0], keep[-1]
        tol = 0.05 * max(iv.width, ref_hi - ref_lo) + 2 * (grid[1] - grid[0])
        assert abs(iv.lower - ref_lo) <= tol
        assert abs(iv.upper - ref_hi) <= tol
