"""basincontrol: drive nonlinear dynamical systems into a target basin of
attraction by iteratively applying small, constraint-compliant
perturbations to the initial condition, each forecasted with the
fundamental matrix of the flow."""

__version__ = "0.1.0"

from .constraints import ConstraintSet, LinearizedConstraints, is_eligible, linearize, unconstrained
from .controller import (
    ControlOutcome,
    ControlParams,
    control,
    find_closest_approach,
    test_convergence,
)
from .dynamics import (
    DynamicalSystem,
    build_system,
    evaluate_rhs,
    jacobian,
    load_edge_list,
)
from .errors import (
    BadTopology,
    BasinControlError,
    DimensionMismatch,
    GenerationFailed,
    IneligibleStart,
    NonFiniteInput,
    NonFiniteOutput,
    NonFiniteState,
    ParseError,
    UnknownModel,
    ValidationError,
)
from .increment import IncrementProblem, IncrementSolution, solve_increment
from .integrate import (
    Trajectory,
    VariationalResult,
    integrate_trajectory,
    integrate_variational,
    write_trajectory_csv,
)

__all__ = [
    "BadTopology",
    "BasinControlError",
    "ConstraintSet",
    "ControlOutcome",
    "ControlParams",
    "DimensionMismatch",
    "DynamicalSystem",
    "GenerationFailed",
    "IncrementProblem",
    "IncrementSolution",
    "IneligibleStart",
    "LinearizedConstraints",
    "NonFiniteInput",
    "NonFiniteOutput",
    "NonFiniteState",
    "ParseError",
    "Trajectory",
    "UnknownModel",
    "ValidationError",
    "VariationalResult",
    "build_system",
    "control",
    "evaluate_rhs",
    "find_closest_approach",
    "integrate_trajectory",
    "integrate_variational",
    "is_eligible",
    "jacobian",
    "linearize",
    "load_edge_list",
    "solve_increment",
    "test_convergence",
    "unconstrained",
    "write_trajectory_csv",
]
