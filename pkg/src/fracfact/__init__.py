"""Exact conditional tests for two-level fractional factorial designs via Markov bases."""

from .correspond import (
    TableModel,
    correspondence_report,
    equivalent_sufficient_statistics,
    primitive_moves_for_decomposable,
    table_model_matrix,
)
from .design import DesignSpec, Word, build_design_matrix, expand_defining_contrast, resolution
from .errors import (
    AliasingError,
    BudgetExceeded,
    ConvergenceError,
    FracfactError,
    InvalidMoveError,
    ParseError,
    ValidationError,
)
from .fiber import enumerate_fiber, exact_null_distribution, exact_pvalue
from .glm import chisq_upper_tail, fit, likelihood_ratio_stat, pearson_stat
from .lattice import hermite_normal_form, kernel_basis
from .model import ModelSpec, build_covariate_matrix, lawrence_lift, sufficient_statistic
from .moves import MoveSet, graver_completion, import_basis, verify_connectivity
from .sampler import ChainConfig, TestResult, feasible_range, gibbs_step, run_chain

__version__ = "0.1.0"

__all__ = [
    "AliasingError", "BudgetExceeded", "ChainConfig", "ConvergenceError", "DesignSpec",
    "FracfactError", "InvalidMoveError", "ModelSpec", "MoveSet", "ParseError", "TableModel",
    "TestResult", "ValidationError", "Word", "build_covariate_matrix", "build_design_matrix",
    "chisq_upper_tail", "correspondence_report", "enumerate_fiber", "equivalent_sufficient_statistics",
    "exact_null_distribution", "exact_pvalue", "expand_defining_contrast", "feasible_range", "fit",
    "gibbs_step", "graver_completion", "hermite_normal_form", "import_basis", "kernel_basis",
    "lawrence_lift", "likelihood_ratio_stat", "pearson_stat", "primitive_moves_for_decomposable",
    "resolution", "run_chain", "sufficient_statistic", "table_model_matrix", "verify_connectivity",
]
