"""Kernel conjugate gradient regression with discrepancy-principle early stopping."""

from .baselines import FilterSpec, filter_fit, filter_function, filter_path, holdout_select
from .cg import CGConfig, CGFit, cg_run, expand, poly_apply, predict, residual_vector
from .config import ExperimentConfig, load_config, validate_config
from .estimators import KernelCGRegressor, SpectralFilterRegressor
from .evaluation import (
    RateReport,
    audit_operator_concentration,
    audit_warped_concentration,
    effective_dimension,
    fit_rate,
    l2_error_exact,
    l2_error_mc,
)
from .exceptions import (
    ConfigError,
    ContractViolation,
    HypothesisViolation,
    KernelCGError,
    KernelEvaluationError,
    NumericalError,
)
from .experiment import run_experiment
from .kernels import (
    Dataset,
    GaussianKernel,
    GramSystem,
    LinearKernel,
    SpectralMercerKernel,
    assemble_gram,
    rescaled_dot,
    weighted_norm,
)
from .stopping import StopDecision, StoppingConfig, stop
from .synthetic import (
    GroundTruth,
    NoiseModel,
    SyntheticSpec,
    build_problem,
    extend_semi_supervised,
    required_unlabeled,
    sample,
)

__version__ = "0.1.0"
