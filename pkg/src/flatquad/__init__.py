"""Flatness-based quadcopter trajectory generation and tracking simulation.

The package builds dynamically feasible quadcopter trajectories by
parametrizing the flat output (x, y, z, tan(yaw/2)) over waypoint-constrained
B-splines, recovers full state and input references from the flat maps, and
simulates three feedback-linearization tracking strategies against the
nonlinear rigid-body model with wind-driven drag.
"""

__version__ = "0.1.0"

from .control import (
    AttitudeCtlState,
    GainSet,
    StrategyKind,
    StrategyState,
    TorqueCtlState,
    attitude_control,
    check_gains,
    linearization_residual,
    strategy_step,
    torque_control,
)
from .errors import (
    DegenerateAccelerationError,
    FlatquadError,
    GimbalLockError,
    InfeasibleConstraintsError,
    InfeasibleThrustError,
    LengthMismatchError,
    OrderTooHighError,
    RotorSaturationError,
    ScenarioError,
    SimulationAbortError,
    SingularKKTError,
)
from .flat_map import (
    FlatSample,
    FlatStateRef,
    flat_angle_derivatives,
    flat_angles,
    flat_thrust,
    flat_torques,
    full_flat_map,
    implicit_residuals,
)
from .rigid_body import (
    BodyParams,
    ControlInput,
    EnvParams,
    RigidState,
    RotorSpeeds,
    WindSample,
    body_rate_map,
    body_rate_map_inverse,
    drag_force,
    euler_torque,
    integrate_step,
    rotation_matrix,
    rotor_forces,
    rotor_mix,
    state_derivative,
)
from .sim import (
    InitialOffset,
    Metrics,
    Scenario,
    TraceRow,
    WindProfile,
    compute_iae,
    hover_scenario,
    open_loop_rollout,
    run_scenario,
    wind_sample,
)
from .spline import (
    BSplineCurve,
    KnotVector,
    WaypointSet,
    YawProfile,
    basis_derivative,
    basis_eval,
    curve_eval,
    sample_flat_trajectory,
    solve_trajectory,
    yaw_profile,
)
