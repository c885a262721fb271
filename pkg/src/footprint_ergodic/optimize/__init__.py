from .problem import (
    ControlBox,
    FootprintInterior,
    InterRobotDistance,
    ProblemSpec,
    Robot,
    Rollout,
    SolverSettings,
    StateBox,
    SurfaceRange,
    constraint_eval,
    default_constraints,
)
from .solver import (
    SolveResult,
    SolverFailure,
    al_value_and_grad,
    evaluate_terms,
    evaluate_trajectories,
    initial_controls,
    objective,
    solve,
    zero_control_ergodicity,
)
