"""Bearing-constrained formation maneuvering.

Agents hold a formation defined purely by inter-agent bearing directions.
Leaders move; followers run a distributed PI law that keeps every desired
bearing satisfied, which lets the group translate and rescale as one body.
The package provides the rigidity and localizability analysis that says when
this works, the control law itself, maneuver planning for the leaders, and a
deterministic simulator with a JSON scenario front end.
"""

from .controller import (
    ControllerState,
    Gains,
    HurwitzReport,
    closed_loop_matrix,
    effective_closed_loop_matrix,
    follower_velocity,
    stacked_dynamics,
    verify_hurwitz,
)
from .errors import (
    DegenerateVector,
    DimensionMismatch,
    EigenSolveFailure,
    NotLocalizable,
    NotRigid,
    ParseError,
    ScheduleGap,
    UnknownNeighbor,
    WindowTooShort,
)
from .formation import (
    BearingSpec,
    Configuration,
    FormationGraph,
    bearing,
    bearing_function,
    desired_bearing,
    orthogonal_projector,
)
from .laplacian import (
    BearingLaplacian,
    LocalizabilityResult,
    bearing_laplacian,
    check_localizable,
    target_follower_positions,
)
from .maneuver import (
    ManeuverCommand,
    centroid,
    combined_command,
    full_velocity_stack,
    scale,
    scaling_command,
    translation_command,
    validate_command,
)
from .rigidity import (
    RigidityReport,
    bearing_rigidity_matrix,
    rigidity_report,
    trivial_motion_basis,
)
from .sim import (
    ExponentialFit,
    Scenario,
    Segment,
    SimContext,
    Trajectory,
    assemble,
    exponential_fit,
    run,
    step,
)

__version__ = "0.1.0"

__all__ = [
    "BearingLaplacian",
    "BearingSpec",
    "Configuration",
    "ControllerState",
    "DegenerateVector",
    "DimensionMismatch",
    "EigenSolveFailure",
    "ExponentialFit",
    "FormationGraph",
    "Gains",
    "HurwitzReport",
    "LocalizabilityResult",
    "ManeuverCommand",
    "NotLocalizable",
    "NotRigid",
    "ParseError",
    "RigidityReport",
    "Scenario",
    "ScheduleGap",
    "Segment",
    "SimContext",
    "Trajectory",
    "UnknownNeighbor",
    "WindowTooShort",
    "assemble",
    "bearing",
    "bearing_function",
    "bearing_laplacian",
    "bearing_rigidity_matrix",
    "centroid",
    "check_localizable",
    "closed_loop_matrix",
    "combined_command",
    "desired_bearing",
    "effective_closed_loop_matrix",
    "exponential_fit",
    "follower_velocity",
    "full_velocity_stack",
    "orthogonal_projector",
    "rigidity_report",
    "run",
    "scale",
    "scaling_command",
    "stacked_dynamics",
    "step",
    "target_follower_positions",
    "translation_command",
    "trivial_motion_basis",
    "validate_command",
    "verify_hurwitz",
]
