"""Time-dependent vehicle routing that minimises crash risk and congestion exposure.

The package splits planning into two phases: a simulated annealing
search over customer-to-vehicle assignments and visit orders, followed
by an exact dynamic program that retimes each fixed route on a
discretised service-start grid.  Hourly speed profiles can be
estimated from raw traffic counts through an M/G/1 queueing model.
"""

__version__ = "0.1.0"

from .model import (
    Arc,
    Fleet,
    Instance,
    InvalidProfileError,
    MissingArcError,
    ModelError,
    Node,
    TimeProfile,
    Traversal,
    augment_depot,
    crash_at,
    ensure_augmented,
    hour_index,
    travel_time,
    traverse,
    tti_at,
)
from .queueing import (
    CalibrationError,
    FlowSeries,
    NoRealRootError,
    QueueModel,
    QueueingError,
    SaturationError,
    build_speed_profile,
    calibrate,
    max_flow,
    speed_from_density,
    speeds_from_flow,
    waiting_time,
)
from .phase1 import (
    OBJECTIVES,
    ObjectiveWeights,
    RoutingSolution,
    SolutionError,
    Violation,
    check_feasibility,
    is_feasible,
    objective_value,
    propagate_schedule,
    solution_report,
)
from .phase2 import (
    Schedule,
    ScheduleError,
    ScheduleInfeasibleError,
    build_schedule_graph,
    optimize_schedule,
    schedule_solution,
)
from .instances import (
    InstanceError,
    Scenario,
    StepFunctionSpec,
    build_scenarios,
    bundled_case_study_dir,
    generate_instance,
    load_case_study,
    load_solomon,
    parse_instance,
    parse_solomon,
    serialize_instance,
)
from .oracle import (
    OracleBudgetError,
    OracleError,
    OracleInfeasibleError,
    OracleResult,
    OracleSizeError,
    enumerate_routes,
    enumerate_schedules,
)
from .solver import (
    Move,
    SolveResult,
    SolverConfig,
    SolverError,
    acceptance,
    cooling_factor,
    initial_solution,
    make_feasible,
    solve,
    solve_scenario,
)

__all__ = [
    "OBJECTIVES",
    "ObjectiveWeights",
    "RoutingSolution",
    "SolutionError",
    "Violation",
    "propagate_schedule",
    "check_feasibility",
    "is_feasible",
    "objective_value",
    "solution_report",
    "Schedule",
    "ScheduleError",
    "ScheduleInfeasibleError",
    "build_schedule_graph",
    "optimize_schedule",
    "schedule_solution",
    "InstanceError",
    "Scenario",
    "StepFunctionSpec",
    "build_scenarios",
    "bundled_case_study_dir",
    "generate_instance",
    "load_case_study",
    "load_solomon",
    "parse_instance",
    "parse_solomon",
    "serialize_instance",
    "OracleError",
    "OracleSizeError",
    "OracleBudgetError",
    "OracleInfeasibleError",
    "OracleResult",
    "enumerate_routes",
    "enumerate_schedules",
    "Move",
    "SolverConfig",
    "SolverError",
    "SolveResult",
    "acceptance",
    "cooling_factor",
    "initial_solution",
    "make_feasible",
    "solve",
    "solve_scenario",
    "Arc",
    "Fleet",
    "Instance",
    "Node",
    "TimeProfile",
    "Traversal",
    "ModelError",
    "InvalidProfileError",
    "MissingArcError",
    "QueueModel",
    "FlowSeries",
    "QueueingError",
    "SaturationError",
    "NoRealRootError",
    "CalibrationError",
    "augment_depot",
    "ensure_augmented",
    "hour_index",
    "travel_time",
    "traverse",
    "tti_at",
    "crash_at",
    "waiting_time",
    "speed_from_density",
    "speeds_from_flow",
    "max_flow",
    "calibrate",
    "build_speed_profile",
    "__version__",
]
