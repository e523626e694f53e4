"""Exception types shared across the package."""


class FlatquadError(Exception):
    """Base class for every error raised by this library."""


class GimbalLockError(FlatquadError):
    """Euler-rate map is singular (pitch too close to +/-90 degrees)."""


class InfeasibleThrustError(FlatquadError):
    """Thrust/torque combination would need a negative rotor speed squared."""


class RotorSaturationError(FlatquadError):
    """A commanded rotor speed exceeds the speed limit."""


class DegenerateAccelerationError(FlatquadError):
    """Commanded vertical acceleration at or below free fall; the attitude
    maps are undefined there."""


class InfeasibleConstraintsError(FlatquadError):
    """Waypoint constraints cannot be satisfied by the requested control
    points (rank deficiency)."""


class SingularKKTError(FlatquadError):
    """The trajectory optimality system is singular or left a large
    constraint residual."""


class OrderTooHighError(FlatquadError):
    """Requested basis derivative order is not available for this spline
    order."""


class LengthMismatchError(FlatquadError):
    """Paired time series have inconsistent lengths."""


class ScenarioError(FlatquadError):
    """Scenario document failed schema validation."""


class SimulationAbortError(FlatquadError):
    """A rollout aborted; the message carries the offending timestamp."""
