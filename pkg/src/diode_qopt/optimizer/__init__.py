from .diode import (
    PARAMETER_NAMES,
    DesignBounds,
    DiodeProblem,
    diode_constraints,
    diode_objective,
    parameter_vector,
    run_diode_optimization,
    scale_floors,
)
from .engine import (
    Constraint,
    ConstraintSet,
    DegenerateConstraintError,
    InfeasibleStartError,
    ObjectiveFailure,
    OptimizationTrace,
    OptimizerConfig,
    OptimizerError,
    ParameterVector,
    finite_diff_gradient,
    merit_value,
    optimize,
    project_feasible,
    scaled_step,
)

__all__ = [
    "PARAMETER_NAMES", "DesignBounds", "DiodeProblem", "diode_constraints", "diode_objective",
    "parameter_vector", "run_diode_optimization", "scale_floors", "Constraint", "ConstraintSet", "DegenerateConstraintError",
    "InfeasibleStartError", "ObjectiveFailure", "OptimizationTrace", "OptimizerConfig", "OptimizerError",
    "ParameterVector", "finite_diff_gradient", "merit_value", "optimize", "project_feasible", "scaled_step",
]
