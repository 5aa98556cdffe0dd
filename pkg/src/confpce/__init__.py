"""Conformal prediction intervals for polynomial chaos surrogates."""

from .benchmarks import BenchmarkModel, benchmark_registry, borehole, ishigami
from .conformal import (
    FullConformalOls,
    PredictionInterval,
    bootstrap_coeffs,
    bootstrap_interval,
    full_conformal_ols,
    full_conformal_sparse,
    jackknife_plus,
    q_minus,
    q_plus,
    sparse_fc_bounds,
    split_interval,
)
from .experiment import EngineConfig, ExperimentConfig, emit_report, paper_config, run_experiment
from .homotopy import HomotopyPath, homotopy_path
from .inputs import ExperimentalDesign, Gaussian, InputModel, Lognormal, Marginal, Uniform
from .metrics import (
    beta_coverage_law,
    empirical_coverage,
    normalized_width,
    spearman_rho,
    validation_error,
)
from .pce import (
    Gram,
    PceBasis,
    PceModel,
    fit_ols,
    fit_pce,
    loo_models,
    loo_residuals,
    sm_augment,
    sm_downdate,
    total_degree_indices,
)
from .sparse import (
    LarsPath,
    LarsStep,
    SparsePceModel,
    hybrid_fit,
    hybrid_select,
    lars_path,
    lasso_at,
    pseudo_lambda,
    refit_at_count,
    sparse_loo_fits,
)

__version__ = "0.1.0"
