import numpy as np
import pytest

from confpce import InputModel, PceBasis, Uniform, fit_ols, ishigami


@pytest.fixture(scope="session")
def ishigami_inputs():
    return InputModel([Uniform(-np.pi, np.pi)] * 3)


@pytest.fixture(scope="session")
def small_ishigami_fit(ishigami_inputs):
    """Degree-3 fit on 50 LHS points: (basis, x, y, psi, coeffs, gram)."""
    basis = PceBasis.total_degree(ishigami_inputs, 3)
    x = ishigami_inputs.sample_lhs(50, 1234)
    y = ishigami(x)
    psi = basis.eval(x)
    coeffs, gram = fit_ols(psi, y)
    return basis, x, y, psi, coeffs, gram


def random_regression(n, p, seed, noise=0.3, support=(1, 4, 7)):
    """Well-conditioned random design with constant column and sparse truth."""
    rng = np.random.default_rng(seed)
    psi = np.column_stack([np.ones(n), rng.standard_normal((n, p - 1))])
    beta = np.zeros(p)
    for k, j in enumerate(support):
        beta[j] = [2.0, -1.5, 1.0][k % 3]
    y = psi @ beta + noise * rng.standard_normal(n)
    return psi, y, beta
