"""Exact l1-penalized least-squares paths, iterative solvers, and
approximation-isochrone benchmarks."""

from .operators import (
    CostCounter,
    Operator,
    SpectrumSpec,
    apply,
    duplicate_columns,
    gen_gaussian,
    normalize_spectral,
    replace_spectrum,
    singular_values,
    spectral_norm,
    surrogate_spectrum,
)
from .fileio import (
    FileFormatError,
    load_operator,
    load_vector,
    save_operator,
    save_vector,
)
from .prox import (
    Problem,
    fixed_point_residual,
    functional_value,
    lambda_max,
    lambda_of_rho,
    project_l1,
    soft_threshold,
)
from .homotopy import (
    HomotopyPath,
    PathDegenerateError,
    PathLimits,
    complexity_slope,
    complexity_table,
    eval_path,
    homotopy_solve,
)
from .solvers import (
    ALGORITHMS,
    SolverState,
    StepFailure,
    Trace,
    make_solver,
    run_budgeted,
    step,
)
from .warmstart import (
    Schedule,
    apsd_run,
    arithmetic_schedule,
    fpc_run,
    geometric_schedule,
    pareto_points,
    rho_to_lambda,
)
from .bench import (
    IsochroneGrid,
    LambdaGrid,
    OracleGateError,
    ReferenceSet,
    build_reference,
    compare_suite,
    default_budget_ladder,
    isochrone,
)

__version__ = "0.1.0"
