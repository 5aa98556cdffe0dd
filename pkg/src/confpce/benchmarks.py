"""Analytical benchmark models and their canonical input distributions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError
from .inputs import Gaussian, InputModel, Lognormal, Uniform

__all__ = ["BenchmarkModel", "ishigami", "borehole", "benchmark_registry"]

ISHIGAMI_A = 7.0
ISHIGAMI_B = 0.07


@dataclass(frozen=True)
class BenchmarkModel:
    name: str
    input_model: InputModel
    evaluator: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x) -> np.ndarray:
        return self.evaluator(np.asarray(x, dtype=float))


def ishigami(x) -> np.ndarray:
    """Ishigami function, a = 7, b = 0.07; x is a 3-vector or (n, 3) matrix."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != 3:
        raise ValueError("ishigami expects 3 inputs")
    y = np.sin(x[:, 0]) + ISHIGAMI_A * np.sin(x[:, 1]) ** 2 + ISHIGAMI_B * x[:, 2] ** 4 * np.sin(x[:, 0])
    return y[0] if single else y


def borehole(x) -> np.ndarray:
    """Borehole flow rate; inputs ordered (r_w, r, T_u, H_u, T_l, H_l, L, K_w)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != 8:
        raise ValueError("borehole expects 8 inputs ordered (r_w, r, T_u, H_u, T_l, H_l, L, K_w)")
    r_w, r, t_u, h_u, t_l, h_l, length, k_w = (x[:, j] for j in range(8))
    if np.any(r_w <= 0) or np.any(r <= r_w):
        raise DomainError("borehole requires r > r_w > 0")
    if np.any(t_l <= 0) or np.any(k_w <= 0) or np.any(length <= 0):
        raise DomainError("borehole requires T_l, K_w, L > 0")
    log_ratio = np.log(r / r_w)
    denom = log_ratio * (1.0 + 2.0 * length * t_u / (log_ratio * r_w**2 * k_w) + t_u / t_l)
    y = 2.0 * np.pi * t_u * (h_u - h_l) / denom
    return y[0] if single else y


def ishigami_input_model() -> InputModel:
    return InputModel([Uniform(-np.pi, np.pi)] * 3)


def borehole_input_model(gaussian_param: str = "std") -> InputModel:
    """Borehole marginals.

    The radius r_w is Gaussian with mean 0.10; the literature is ambiguous
    about whether 0.0161812 is its standard deviation or variance, so the
    interpretation is a switch (``"std"``, the default, or ``"var"``).
    """
    if gaussian_param == "std":
        sigma_rw = 0.0161812
    elif gaussian_param == "var":
        sigma_rw = float(np.sqrt(0.0161812))
    else:
        raise ValueError("gaussian_param must be 'std' or 'var'")
    return InputModel(
        [
            Gaussian(0.10, sigma_rw),
            Lognormal(7.71, 1.0056),
            Uniform(63070.0, 115600.0),
            Uniform(990.0, 1100.0),
            Uniform(63.1, 116.0),
            Uniform(700.0, 820.0),
            Uniform(1120.0, 1680.0),
            Uniform(9885.0, 12045.0),
        ]
    )


def benchmark_registry(name: str, gaussian_param: str = "std") -> BenchmarkModel:
    """Look up a benchmark model by name ('ishigami' or 'borehole')."""
    if name == "ishigami":
        return BenchmarkModel("ishigami", ishigami_input_model(), ishigami)
    if name == "borehole":
        return BenchmarkModel("borehole", borehole_input_model(gaussian_param), borehole)
    raise KeyError(f"unknown benchmark {name!r}; expected 'ishigami' or 'borehole'")
