"""Regularized tensor regression for structured point clouds."""

from importlib.metadata import PackageNotFoundError, version

from .basis import BasisSet, bspline_basis, second_difference_penalty, spline_basis_set
from .benchmark import BenchmarkConfig, run_benchmark
from .covariance import CovModel, build_gaussian_cov, factorize
from .hetero import VarianceModel, fit_hetero, gamma_regression_log_link
from .procopt import OptProblem, problem_from_fit, solve_qp, sweep_sigma0
from .regress import (
    FitResult,
    design_matrix,
    fit_gls,
    fit_lr,
    fit_otdr,
    fit_projected,
    fit_rtr,
    fit_tdr,
    fit_vpcr,
    predict,
)
from .simulate import Case1Spec, Case2Spec, gen_case1, gen_case2, relative_sse
from .tensor import DimensionError, fold, kron, mode_product, unfold, vec
from .tuning import TuningGrid, bic_score, gcv_score, select_lambda, select_otdr_params

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"
