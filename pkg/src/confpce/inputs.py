"""Input random vectors with independent marginals.

Provides the three marginal families used by the benchmark problems
(uniform, Gaussian, lognormal), Monte Carlo and Latin Hypercube designs,
and the map to the standardized space where the classical orthonormal
polynomial families live.

Conventions
-----------
* Lognormal(log_mean, log_std) parameterizes the mean and standard
  deviation of ln X (the usual UQ convention).
* Standardized space: Uniform(a, b) maps linearly onto [-1, 1]
  (Legendre), Gaussian and Lognormal map onto a standard normal variate
  (probabilist Hermite).
* All sampling is driven by ``numpy.random.Generator`` seeded through
  ``SeedSequence``, so results are bit-reproducible across platforms for
  a fixed numpy version.  Parallel callers must use distinct seeds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import DomainError

__all__ = [
    "Uniform",
    "Gaussian",
    "Lognormal",
    "Marginal",
    "InputModel",
    "ExperimentalDesign",
    "rng_from_seed",
]


def rng_from_seed(seed) -> np.random.Generator:
    """Build the package-wide generator (PCG64 via SeedSequence).

    ``seed`` may be an int, a ``SeedSequence``, or a tuple
    ``(entropy, spawn_key)`` used to derive independent child streams.
    """
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    if isinstance(seed, tuple):
        entropy, spawn_key = seed
        return np.random.default_rng(np.random.SeedSequence(entropy, spawn_key=spawn_key))
    return np.random.default_rng(np.random.SeedSequence(seed))


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError(f"Uniform requires hi > lo, got ({self.lo}, {self.hi})")

    def ppf(self, u):
        return self.lo + (self.hi - self.lo) * np.asarray(u, dtype=float)

    def cdf(self, x):
        return np.clip((np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def in_support(self, x):
        x = np.asarray(x, dtype=float)
        return (x >= self.lo) & (x <= self.hi)

    def to_standard(self, x):
        return 2.0 * (np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo) - 1.0

    def from_standard(self, u):
        return self.lo + 0.5 * (np.asarray(u, dtype=float) + 1.0) * (self.hi - self.lo)


@dataclass(frozen=True)
class Gaussian:
    mean: float
    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError(f"Gaussian requires std > 0, got {self.std}")

    def ppf(self, u):
        return self.mean + self.std * ndtri(np.asarray(u, dtype=float))

    def cdf(self, x):
        return ndtr((np.asarray(x, dtype=float) - self.mean) / self.std)

    def in_support(self, x):
        return np.isfinite(np.asarray(x, dtype=float))

    def to_standard(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.std

    def from_standard(self, z):
        return self.mean + self.std * np.asarray(z, dtype=float)


@dataclass(frozen=True)
class Lognormal:
    """X such that ln X ~ N(log_mean, log_std**2)."""

    log_mean: float
    log_std: float

    def __post_init__(self):
        if not self.log_std > 0:
            raise ValueError(f"Lognormal requires log_std > 0, got {self.log_std}")

    def ppf(self, u):
        return np.exp(self.log_mean + self.log_std * ndtri(np.asarray(u, dtype=float)))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x, dtype=float)
        pos = x > 0
        out = np.where(pos, ndtr((np.log(np.where(pos, x, 1.0)) - self.log_mean) / self.log_std), 0.0)
        return out

    def in_support(self, x):
        return np.asarray(x, dtype=float) > 0

    def to_standard(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise DomainError("lognormal variate must be positive")
        return (np.log(x) - self.log_mean) / self.log_std

    def from_standard(self, z):
        return np.exp(self.log_mean + self.log_std * np.asarray(z, dtype=float))


Marginal = Union[Uniform, Gaussian, Lognormal]


@dataclass(frozen=True)
class InputModel:
    """Random vector with mutually independent marginals."""

    marginals: tuple

    def __init__(self, marginals: Sequence[Marginal]):
        marginals = tuple(marginals)
        if len(marginals) < 1:
            raise ValueError("InputModel needs at least one marginal")
        object.__setattr__(self, "marginals", marginals)

    @property
    def dim(self) -> int:
        return len(self.marginals)

    def sample_mc(self, n: int, seed) -> np.ndarray:
        """i.i.d. design of shape (n, M) via inverse-CDF sampling."""
        if n < 1:
            raise ValueError("n must be >= 1")
        rng = rng_from_seed(seed)
        u = rng.random((n, self.dim))
        cols = [m.ppf(u[:, j]) for j, m in enumerate(self.marginals)]
        return np.column_stack(cols)

    def sample_lhs(self, n: int, seed) -> np.ndarray:
        """Latin Hypercube design of shape (n, M).

        Per column, one point falls in each of the n equiprobable strata;
        stratum order is an independent uniform permutation per column and
        the within-stratum position is uniform.
        """
        if n < 1:
            raise ValueError("n must be >= 1")
        rng = rng_from_seed(seed)
        cols = []
        for m in self.marginals:
            perm = rng.permutation(n)
            u = (perm + rng.random(n)) / n
            cols.append(m.ppf(u))
        return np.column_stack(cols)

    def to_standard(self, x) -> np.ndarray:
        """Map physical points (M-vector or (n, M) matrix) to standardized space."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim} columns, got {x.shape[1]}")
        for j, m in enumerate(self.marginals):
            if not np.all(m.in_support(x[:, j])):
                raise DomainError(f"component {j} outside the support of {m}")
        out = np.column_stack([m.to_standard(x[:, j]) for j, m in enumerate(self.marginals)])
        return out[0] if single else out

    def from_standard(self, u) -> np.ndarray:
        """Inverse of :meth:`to_standard`."""
        u = np.asarray(u, dtype=float)
        single = u.ndim == 1
        u = np.atleast_2d(u)
        out = np.column_stack([m.from_standard(u[:, j]) for j, m in enumerate(self.marginals)])
        return out[0] if single else out

    def marginal_dicts(self) -> list:
        """JSON-ready description of the marginals."""
        out = []
        for m in self.marginals:
            if isinstance(m, Uniform):
                out.append({"kind": "uniform", "lo": m.lo, "hi": m.hi})
            elif isinstance(m, Gaussian):
                out.append({"kind": "gaussian", "mean": m.mean, "std": m.std})
            else:
                out.append({"kind": "lognormal", "log_mean": m.log_mean, "log_std": m.log_std})
        return out

    @staticmethod
    def from_marginal_dicts(dicts) -> "InputModel":
        marginals = []
        for d in dicts:
            kind = d["kind"]
            if kind == "uniform":
                marginals.append(Uniform(d["lo"], d["hi"]))
            elif kind == "gaussian":
                marginals.append(Gaussian(d["mean"], d["std"]))
            elif kind == "lognormal":
                marginals.append(Lognormal(d["log_mean"], d["log_std"]))
            else:
                raise ValueError(f"unknown marginal kind {kind!r}")
        return InputModel(marginals)


@dataclass(frozen=True)
class ExperimentalDesign:
    """Design points (physical space) and the model responses at them."""

    points: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        if self.points.shape[0] != self.responses.shape[0]:
            raise ValueError("points and responses disagree on n")
        if self.points.shape[0] < 1:
            raise ValueError("empty design")

    @property
    def n(self) -> int:
        return self.points.shape[0]
