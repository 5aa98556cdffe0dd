"""Polynomial chaos basis, regression matrix, and OLS kernels.

The basis couples an :class:`~confpce.inputs.InputModel` with a truncated
set of multi-indices (all total degrees <= p, graded-lexicographic order:
degree blocks ascending, first variable's exponent descending within a
block).  Univariate families are orthoNORMAL so coefficient magnitudes
are comparable across indices:

* Uniform marginals: Legendre, sqrt(2d+1) * P_d(u) on [-1, 1];
* Gaussian / Lognormal marginals: probabilist Hermite, He_d(z)/sqrt(d!).

``fit_ols`` materializes the explicit Gram inverse and the complementary
hat diagonal h_i (the i-th diagonal of I - Psi (Psi'Psi)^-1 Psi'), which
the rank-one update and leave-one-out shortcuts consume.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DegenerateLeverageError, NumericalError, SingularUpdateError
from .inputs import Gaussian, InputModel, Lognormal, Uniform

__all__ = [
    "total_degree_indices",
    "PceBasis",
    "Gram",
    "PceModel",
    "fit_ols",
    "fit_pce",
    "sm_augment",
    "sm_downdate",
    "loo_residuals",
    "loo_models",
]

MAX_BASIS_SIZE = 5_000_000
COND_LIMIT = 1e12
LEVERAGE_TOL = 1e-10
SM_DENOM_TOL = 1e-12


def total_degree_indices(dim: int, degree: int) -> np.ndarray:
    """All multi-indices with total degree <= degree, graded-lex order.

    Returns an array of shape (C(dim+degree, degree), dim); row 0 is the
    constant term.
    """
    if dim < 1 or degree < 0:
        raise ValueError("need dim >= 1 and degree >= 0")
    count = math.comb(dim + degree, degree)
    if count > MAX_BASIS_SIZE:
        raise ValueError(f"basis size C({dim + degree},{degree}) = {count} exceeds limit {MAX_BASIS_SIZE}")

    rows = []

    def compositions(total, slots, prefix):
        if slots == 1:
            rows.append(prefix + [total])
            return
        for first in range(total, -1, -1):
            compositions(total - first, slots - 1, prefix + [first])

    for d in range(degree + 1):
        compositions(d, dim, [])
    out = np.array(rows, dtype=np.int64)
    assert out.shape == (count, dim)
    return out


def _legendre_table(u: np.ndarray, degree: int) -> np.ndarray:
    """Orthonormal Legendre values, shape (degree+1, len(u))."""
    u = np.asarray(u, dtype=float)
    tab = np.empty((degree + 1, u.shape[0]))
    tab[0] = 1.0
    if degree >= 1:
        tab[1] = u
    for d in range(1, degree):
        tab[d + 1] = ((2 * d + 1) * u * tab[d] - d * tab[d - 1]) / (d + 1)
    norms = np.sqrt(2.0 * np.arange(degree + 1) + 1.0)
    return tab * norms[:, None]


def _hermite_table(z: np.ndarray, degree: int) -> np.ndarray:
    """Orthonormal probabilist-Hermite values, shape (degree+1, len(z))."""
    z = np.asarray(z, dtype=float)
    tab = np.empty((degree + 1, z.shape[0]))
    tab[0] = 1.0
    if degree >= 1:
        tab[1] = z
    for d in range(1, degree):
        tab[d + 1] = z * tab[d] - d * tab[d - 1]
    norms = np.array([1.0 / math.sqrt(math.factorial(d)) for d in range(degree + 1)])
    return tab * norms[:, None]


def _univariate_table(marginal, u: np.ndarray, degree: int) -> np.ndarray:
    if isinstance(marginal, Uniform):
        return _legendre_table(u, degree)
    if isinstance(marginal, (Gaussian, Lognormal)):
        return _hermite_table(u, degree)
    raise TypeError(f"no polynomial family for {marginal!r}")


@dataclass(frozen=True)
class PceBasis:
    """Truncated multivariate basis over an input model."""

    model: InputModel
    indices: np.ndarray
    degree: int

    @staticmethod
    def total_degree(model: InputModel, degree: int) -> "PceBasis":
        return PceBasis(model, total_degree_indices(model.dim, degree), degree)

    @property
    def size(self) -> int:
        return self.indices.shape[0]

    def eval_standard(self, u) -> np.ndarray:
        """Evaluate all basis polynomials at standardized points, shape (n, P)."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        n = u.shape[0]
        out = np.ones((n, self.size))
        for k, marginal in enumerate(self.model.marginals):
            max_d = int(self.indices[:, k].max())
            tab = _univariate_table(marginal, u[:, k], max_d)
            out *= tab[self.indices[:, k], :].T
        return out

    def eval(self, x) -> np.ndarray:
        """Evaluate at physical points; propagates domain errors from the transform."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        u = self.model.to_standard(np.atleast_2d(x))
        rows = self.eval_standard(u)
        return rows[0] if single else rows

    def restrict(self, columns) -> "PceBasis":
        """Sub-basis over the given column positions (order preserved)."""
        cols = np.asarray(columns, dtype=int)
        return PceBasis(self.model, self.indices[cols], self.degree)


@dataclass(frozen=True)
class Gram:
    """Normal-equation bookkeeping for one design matrix.

    ``hat`` is the complementary leverage 1 - psi_i' Minv psi_i per design
    row; rank-one updated Grams do not track it (``hat is None``).
    """

    matrix: np.ndarray
    inv: np.ndarray
    hat: Optional[np.ndarray]
    cond: float


def fit_ols(psi: np.ndarray, y: np.ndarray, cond_limit: float = COND_LIMIT):
    """Least-squares coefficients plus the Gram bookkeeping.

    Requires n >= P and a Gram condition estimate below ``cond_limit``;
    otherwise raises :class:`NumericalError` naming the offending columns.
    """
    psi = np.asarray(psi, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = psi.shape
    if n < p:
        raise NumericalError(f"underdetermined OLS: n={n} < P={p}")
    sing = np.linalg.svd(psi, compute_uv=False)
    if sing[-1] <= 0 or (sing[0] / sing[-1]) ** 2 > cond_limit:
        _, _, vt = np.linalg.svd(psi)
        weights = np.abs(vt[-1])
        offending = np.nonzero(weights > 0.1 * weights.max())[0]
        raise NumericalError(
            f"Gram condition estimate {(sing[0] / max(sing[-1], 1e-300)) ** 2:.3e} exceeds "
            f"{cond_limit:.1e}; near-dependent columns {offending.tolist()}"
        )
    q, r = np.linalg.qr(psi)
    coeffs = solve_triangular(r, q.T @ y)
    r_inv = solve_triangular(r, np.eye(p))
    inv = r_inv @ r_inv.T
    hat = 1.0 - np.einsum("ij,ij->i", q, q)
    gram = Gram(matrix=psi.T @ psi, inv=inv, hat=hat, cond=float((sing[0] / sing[-1]) ** 2))
    return coeffs, gram


def sm_augment(gram: Gram, phi: np.ndarray) -> Gram:
    """Gram after appending one design row, via the Sherman-Morrison formula."""
    phi = np.asarray(phi, dtype=float)
    t = gram.inv @ phi
    denom = 1.0 + phi @ t
    if denom <= SM_DENOM_TOL:
        raise SingularUpdateError(f"augment denominator {denom:.3e} <= {SM_DENOM_TOL}")
    inv = gram.inv - np.outer(t, t) / denom
    return Gram(matrix=gram.matrix + np.outer(phi, phi), inv=inv, hat=None, cond=gram.cond)


def sm_downdate(gram: Gram, phi: np.ndarray) -> Gram:
    """Gram after removing one design row (inverse of :func:`sm_augment`)."""
    phi = np.asarray(phi, dtype=float)
    t = gram.inv @ phi
    denom = 1.0 - phi @ t
    if denom <= SM_DENOM_TOL:
        raise SingularUpdateError(f"downdate denominator {denom:.3e} <= {SM_DENOM_TOL}")
    inv = gram.inv + np.outer(t, t) / denom
    return Gram(matrix=gram.matrix - np.outer(phi, phi), inv=inv, hat=None, cond=gram.cond)


def _checked_hat(gram: Gram) -> np.ndarray:
    if gram.hat is None:
        raise ValueError("this Gram does not carry a hat diagonal (rank-one updated)")
    bad = np.nonzero(gram.hat <= LEVERAGE_TOL)[0]
    if bad.size:
        raise DegenerateLeverageError(f"leverage ~1 at design rows {bad.tolist()}")
    return gram.hat


def loo_residuals(gram: Gram, psi: np.ndarray, y: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """Signed leave-one-out residuals y_i - (fit without i)(x_i), analytically."""
    hat = _checked_hat(gram)
    resid = np.asarray(y, dtype=float) - psi @ coeffs
    return resid / hat


def loo_models(gram: Gram, psi: np.ndarray, y: np.ndarray) -> np.ndarray:
    """All n leave-one-out coefficient vectors, shape (n, P)."""
    hat = _checked_hat(gram)
    psi = np.asarray(psi, dtype=float)
    y = np.asarray(y, dtype=float)
    coeffs = gram.inv @ (psi.T @ y)
    resid = y - psi @ coeffs
    t = psi @ gram.inv
    return coeffs[None, :] - t * (resid / hat)[:, None]


@dataclass(frozen=True)
class PceModel:
    """A fitted expansion: basis plus coefficient vector."""

    basis: PceBasis
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape[0] != self.basis.size:
            raise ValueError("coefficient length disagrees with basis size")

    def predict(self, x) -> np.ndarray:
        rows = self.basis.eval(x)
        return rows @ self.coeffs

    def to_json(self) -> str:
        payload = {
            "marginals": self.basis.model.marginal_dicts(),
            "degree": self.basis.degree,
            "indices": self.basis.indices.tolist(),
            "coeffs": self.coeffs.tolist(),
        }
        return json.dumps(payload)

    @staticmethod
    def from_json(text: str) -> "PceModel":
        payload = json.loads(text)
        model = InputModel.from_marginal_dicts(payload["marginals"])
        basis = PceBasis(model, np.array(payload["indices"], dtype=np.int64), payload["degree"])
        return PceModel(basis, np.array(payload["coeffs"], dtype=float))


def fit_pce(basis: PceBasis, x: np.ndarray, y: np.ndarray):
    """OLS-fit a full expansion on physical-space design points.

    Returns (model, psi, gram); psi and gram are reused by the interval
    engines.
    """
    psi = basis.eval(np.atleast_2d(x))
    coeffs, gram = fit_ols(psi, y)
    return PceModel(basis, coeffs), psi, gram
