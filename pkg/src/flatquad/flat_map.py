"""Maps from the flat output to full state and input references.

The flat output is z = (x, y, z, tan(yaw/2)). Given z and its time
derivatives through order four, the attitude, attitude rates and
accelerations, thrust and body torques of the quadcopter are recovered
algebraically, so any sufficiently smooth flat-output curve is a dynamically
feasible trajectory. Angles need derivatives of z through order three, the
torques through order four.

Using the half-angle tangent for the yaw channel keeps every map free of
trigonometric functions of the flat output, which is what makes the closed
forms below tractable. All functions are stateless and thread-safe.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateAccelerationError
from .rigid_body import BodyParams, euler_torque

log = logging.getLogger(__name__)

# arcsin arguments may exceed 1 by rounding only; clamping beyond this is
# reported because it points at a modeling problem rather than roundoff.
CLAMP_REPORT_THRESHOLD = 1e-9


def _vec4(x) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.shape != (4,):
        raise ValueError(f"expected a 4-vector, got shape {v.shape}")
    return v


@dataclass(frozen=True)
class FlatSample:
    """Flat output and its derivatives through order four at one instant.

    The vertical channel must satisfy d2z[2] + gravity > 0 (the thrust axis
    keeps pointing upward); construction rejects anything else.
    """

    time: float
    z: np.ndarray
    dz: np.ndarray
    d2z: np.ndarray
    d3z: np.ndarray
    d4z: np.ndarray
    gravity: float = 9.81

    def __post_init__(self):
        for name in ("z", "dz", "d2z", "d3z", "d4z"):
            object.__setattr__(self, name, _vec4(getattr(self, name)))
        if self.d2z[2] + self.gravity <= 0.0:
            raise DegenerateAccelerationError(
                f"t={self.time:.6g}: vertical acceleration {self.d2z[2]:.6g} "
                f"is at or below free fall")


@dataclass(frozen=True)
class FlatStateRef:
    """Reference state and input implied by one flat sample."""

    time: float
    position: np.ndarray       # m
    velocity: np.ndarray       # m/s
    acceleration: np.ndarray   # m/s^2
    angles: np.ndarray         # rad (roll, pitch, yaw)
    angle_rates: np.ndarray    # rad/s
    angle_accels: np.ndarray   # rad/s^2
    thrust: float              # N
    torque: np.ndarray         # N*m


def _clamped_arcsin(x: float) -> float:
    if abs(x) > 1.0:
        if abs(x) - 1.0 > CLAMP_REPORT_THRESHOLD:
            log.warning("arcsin argument clamped by %.3e", abs(x) - 1.0)
        x = math.copysign(1.0, x)
    return math.asin(x)


def tilt_from_acceleration(accel, yaw_half_tan: float, gravity: float) -> tuple[float, float]:
    """Roll and pitch that realize a translational acceleration.

    ``accel`` is the desired inertial acceleration (3-vector); the thrust
    direction absorbs gravity, so the vertical channel enters as
    accel[2] + gravity which must stay positive.
    """
    k1, k2 = float(accel[0]), float(accel[1])
    k3 = float(accel[2]) + gravity
    if k3 <= 0.0:
        raise DegenerateAccelerationError(
            f"vertical acceleration {accel[2]:.6g} is at or below free fall")
    w = yaw_half_tan
    q = 1.0 + w * w
    norm = math.sqrt(k1 * k1 + k2 * k2 + k3 * k3)
    roll = _clamped_arcsin((2.0 * w * k1 - (1.0 - w * w) * k2) / (q * norm))
    pitch = math.atan(((1.0 - w * w) * k1 + 2.0 * w * k2) / (q * k3))
    return roll, pitch


def thrust_from_acceleration(accel, mass: float, gravity: float) -> float:
    """Thrust magnitude realizing a translational acceleration."""
    k1, k2 = float(accel[0]), float(accel[1])
    k3 = float(accel[2]) + gravity
    if k3 <= 0.0:
        raise DegenerateAccelerationError(
            f"vertical acceleration {accel[2]:.6g} is at or below free fall")
    return mass * math.sqrt(k1 * k1 + k2 * k2 + k3 * k3)


def yaw_from_half_tan(yaw_half_tan: float) -> float:
    return 2.0 * math.atan(yaw_half_tan)


def flat_angles(s: FlatSample) -> np.ndarray:
    """Euler angles (roll, pitch, yaw) implied by a flat sample."""
    roll, pitch = tilt_from_acceleration(s.d2z[:3], s.z[3], s.gravity)
    return np.array([roll, pitch, yaw_from_half_tan(s.z[3])])


def flat_thrust(s: FlatSample, mass: float) -> float:
    """Thrust implied by a flat sample; always positive."""
    return thrust_from_acceleration(s.d2z[:3], mass, s.gravity)


def _angle_chain(s: FlatSample) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Angles with their first and second time derivatives.

    The closed forms for roll/pitch/yaw are differentiated through their
    intermediate quantities (numerators, the 1 + w^2 factor, the acceleration
    norm) by the chain rule; no finite differences are involved.
    """
    w, dw, ddw = float(s.z[3]), float(s.dz[3]), float(s.d2z[3])
    k1, k2 = float(s.d2z[0]), float(s.d2z[1])
    k3 = float(s.d2z[2]) + s.gravity
    dk1, dk2, dk3 = (float(x) for x in s.d3z[:3])
    ddk1, ddk2, ddk3 = (float(x) for x in s.d4z[:3])

    q = 1.0 + w * w
    dq = 2.0 * w * dw
    ddq = 2.0 * dw * dw + 2.0 * w * ddw

    n2 = k1 * k1 + k2 * k2 + k3 * k3
    n = math.sqrt(n2)
    dn = (k1 * dk1 + k2 * dk2 + k3 * dk3) / n
    ddn = (dk1 * dk1 + k1 * ddk1 + dk2 * dk2 + k2 * ddk2
           + dk3 * dk3 + k3 * ddk3 - dn * dn) / n

    # roll = arcsin(u / (q n))
    u = 2.0 * w * k1 - (1.0 - w * w) * k2
    du = 2.0 * dw * k1 + 2.0 * w * dk1 + 2.0 * w * dw * k2 - (1.0 - w * w) * dk2
    ddu = (2.0 * ddw * k1 + 4.0 * dw * dk1 + 2.0 * w * ddk1
           + (2.0 * dw * dw + 2.0 * w * ddw) * k2 + 4.0 * w * dw * dk2
           - (1.0 - w * w) * ddk2)
    denom = q * n
    ddenom = dq * n + q * dn
    dddenom = ddq * n + 2.0 * dq * dn + q * ddn
    sin_roll = u / denom
    dsin = (du - sin_roll * ddenom) / denom
    ddsin = (ddu - 2.0 * dsin * ddenom - sin_roll * dddenom) / denom
    roll = _clamped_arcsin(sin_roll)
    cos_roll_sq = 1.0 - min(sin_roll * sin_roll, 1.0)
    if cos_roll_sq < 1e-18:
        raise DegenerateAccelerationError(
            f"t={s.time:.6g}: roll reference at +/-90 degrees, rates undefined")
    cos_roll = math.sqrt(cos_roll_sq)
    droll = dsin / cos_roll
    ddroll = ddsin / cos_roll + sin_roll * dsin * dsin / cos_roll ** 3

    # pitch = arctan(v / (q k3))
    v = (1.0 - w * w) * k1 + 2.0 * w * k2
    dv = -2.0 * w * dw * k1 + (1.0 - w * w) * dk1 + 2.0 * dw * k2 + 2.0 * w * dk2
    ddv = (-(2.0 * dw * dw + 2.0 * w * ddw) * k1 - 4.0 * w * dw * dk1
           + (1.0 - w * w) * ddk1 + 2.0 * ddw * k2 + 4.0 * dw * dk2
           + 2.0 * w * ddk2)
    e = q * k3
    de = dq * k3 + q * dk3
    dde = ddq * k3 + 2.0 * dq * dk3 + q * ddk3
    r = v / e
    dr = (dv - r * de) / e
    ddr = (ddv - 2.0 * dr * de - r * dde) / e
    one_r2 = 1.0 + r * r
    pitch = math.atan(r)
    dpitch = dr / one_r2
    ddpitch = ddr / one_r2 - 2.0 * r * dr * dr / (one_r2 * one_r2)

    # yaw = 2 arctan(w)
    yaw = 2.0 * math.atan(w)
    dyaw = 2.0 * dw / q
    ddyaw = 2.0 * ddw / q - 2.0 * dw * dq / (q * q)

    return (np.array([roll, pitch, yaw]),
            np.array([droll, dpitch, dyaw]),
            np.array([ddroll, ddpitch, ddyaw]))


def flat_angle_derivatives(s: FlatSample) -> tuple[np.ndarray, np.ndarray]:
    """First and second time derivatives of the flat Euler angles."""
    _, deta, ddeta = _angle_chain(s)
    return deta, ddeta


def flat_torques(s: FlatSample, params: BodyParams) -> np.ndarray:
    """Body torques implied by a flat sample.

    Evaluates the Euler-coordinate rotation dynamics at the flat angles and
    their analytic derivatives; this is algebraically identical to the fully
    expanded closed forms but testable term by term.
    """
    eta, deta, ddeta = _angle_chain(s)
    return euler_torque(eta, deta, ddeta, params)


def full_flat_map(s: FlatSample, params: BodyParams) -> FlatStateRef:
    """Assemble the complete reference implied by one flat sample."""
    eta, deta, ddeta = _angle_chain(s)
    return FlatStateRef(
        time=s.time,
        position=s.z[:3].copy(),
        velocity=s.dz[:3].copy(),
        acceleration=s.d2z[:3].copy(),
        angles=eta,
        angle_rates=deta,
        angle_accels=ddeta,
        thrust=flat_thrust(s, params.mass),
        torque=euler_torque(eta, deta, ddeta, params),
    )


def implicit_residuals(accel, angles, gravity: float) -> tuple[float, float]:
    """Residuals of the two implicit relations tying tilt to acceleration.

    Both vanish identically on any (acceleration, angles) pair produced by
    the flat maps; a nonzero value measures how far a state is from the
    manifold the translational dynamics confine it to.
    """
    ax, ay = float(accel[0]), float(accel[1])
    az_g = float(accel[2]) + gravity
    roll, pitch, yaw = (float(a) for a in angles)
    norm = math.sqrt(ax * ax + ay * ay + az_g * az_g)
    r1 = math.sin(roll) * norm - math.sin(yaw) * ax + math.cos(yaw) * ay
    r2 = math.tan(pitch) * az_g - math.cos(yaw) * ax - math.sin(yaw) * ay
    return r1, r2
