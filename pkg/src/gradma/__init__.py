"""Spectral solver for the complex Monge-Ampere equation with a gradient term on flat tori."""

__version__ = "0.1.0"

from .torus import (
    HermitianField,
    OneFormField,
    PeriodicGrid,
    ScalarField,
    TrigExpression,
    TrigTerm,
    complex_derivative,
    complex_hessian,
    reduce,
    sample_field,
)
from .operator import (
    OperatorOutput,
    ProblemData,
    assemble_gtilde,
    linearized_adjoint_apply,
    linearized_apply,
    ma_residual,
)
from .solver import (
    Solution,
    SolverConfig,
    SolveState,
    continuity_solve,
    kernel_density,
    krylov_solve,
    newton_solve_at_t,
    normalize_sup,
)
from .monitors import (
    EstimateReport,
    aeppli_defect,
    eigenvalue_derivative_check,
    estimate_report,
    uniqueness_probe,
)
