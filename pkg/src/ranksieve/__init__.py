"""Sparse regression with the Wilcoxon rank loss and the square-root loss.

Adaptive sieving around a proximal point / augmented Lagrangian /
semismooth Newton solver, plus synthetic benchmarks and an ADMM oracle.
"""

from .estimator import RankLasso, SqrtLasso
from .exceptions import (
    InvalidArgumentError,
    NonConvergenceError,
    NumericFailureError,
    StagnationError,
)
from .metrics import MetricsReport, evaluate, nonzero_rule
from .model import Loss, ProblemData, SolveReport, SolverConfig, objective
from .prox import prox_euclidean, prox_wilcoxon, soft_threshold
from .refsolver import splitting_solve
from .sieve import as_solve
from .synth import SynthSpec, generate
from .tuning import LambdaSpec, rank_lambda, sqrt_lasso_lambda

__version__ = "0.1.0"

__all__ = [
    "RankLasso", "SqrtLasso", "InvalidArgumentError", "NonConvergenceError",
    "NumericFailureError", "StagnationError", "MetricsReport", "evaluate",
    "nonzero_rule", "Loss", "ProblemData", "SolveReport", "SolverConfig",
    "objective", "prox_euclidean", "prox_wilcoxon", "soft_threshold",
    "splitting_solve", "as_solve", "SynthSpec", "generate", "LambdaSpec",
    "rank_lambda", "sqrt_lasso_lambda",
]
