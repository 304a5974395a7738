"""Dual natural gradient descent for nonlinear least squares and PINNs.

The Gauss-Newton/Levenberg-Marquardt step is solved in the m-dimensional
residual space (the dual system on the Gramian J J^T) instead of the
n-dimensional parameter space, with geodesic acceleration on the dense
path and Nystrom-preconditioned conjugate gradients on the iterative one.
"""

from .adcore import input_jet, jvp_params, second_directional, vjp_params
from .errors import (
    ConfigError,
    DimensionError,
    DngdError,
    DomainError,
    FactorizationError,
    NonFiniteError,
)
from .jets import Dual, Jet2
from .model import MlpSpec, OutputTransform, forward, init_params
from .optimizer import (
    OptimizerConfig,
    TrainTrace,
    baseline_run,
    dngd_minimize,
    dngd_run,
    lm_damping,
    line_search,
    primal_ga_correction,
    primal_gn_solve,
    relative_l2_error,
    timing_sweep,
)
from .params import ParameterLayout, ParameterVector
from .problems import (
    PROBLEMS,
    build_map,
    eval_residuals,
    make_problem,
    sample_collocation,
    stde_laplacian,
)
from .residuals import (
    CollocationClass,
    CollocationSet,
    LinearResidualMap,
    PinnResidualMap,
    RegressionResidualMap,
    ResidualBatch,
    ResidualMap,
)
from .solver import (
    NystromPreconditioner,
    StepResult,
    assemble_gramian,
    dense_dual_solve,
    kernel_entry,
    kvp,
    nystrom_build,
    pcg_step,
    precond_apply,
)
from .tape import Tape, Var

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "CollocationClass",
    "CollocationSet",
    "DimensionError",
    "DngdError",
    "DomainError",
    "Dual",
    "FactorizationError",
    "Jet2",
    "LinearResidualMap",
    "MlpSpec",
    "NonFiniteError",
    "NystromPreconditioner",
    "OptimizerConfig",
    "OutputTransform",
    "PROBLEMS",
    "ParameterLayout",
    "ParameterVector",
    "PinnResidualMap",
    "RegressionResidualMap",
    "ResidualBatch",
    "ResidualMap",
    "StepResult",
    "Tape",
    "TrainTrace",
    "Var",
    "assemble_gramian",
    "baseline_run",
    "build_map",
    "dense_dual_solve",
    "dngd_minimize",
    "dngd_run",
    "eval_residuals",
    "forward",
    "init_params",
    "input_jet",
    "jvp_params",
    "kernel_entry",
    "kvp",
    "line_search",
    "lm_damping",
    "make_problem",
    "nystrom_build",
    "pcg_step",
    "precond_apply",
    "primal_ga_correction",
    "primal_gn_solve",
    "relative_l2_error",
    "sample_collocation",
    "second_directional",
    "stde_laplacian",
    "timing_sweep",
    "vjp_params",
    "__version__",
]
