"""Nonlinear six degree-of-freedom quadcopter model.

Conventions: the inertial frame is East-North-Up and the body frame sits at
the vehicle center of mass. Attitude is parametrized by roll-pitch-yaw (XYZ)
Euler angles; ``rotation_matrix`` maps body vectors into the inertial frame.
Body rates are the angular velocity expressed in the body frame (what a gyro
measures), related to Euler-angle rates through ``body_rate_map``.

Everything here is a pure function over value types, so instances can be
shared freely between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import GimbalLockError, InfeasibleThrustError, RotorSaturationError

# |cos(pitch)| at or below this raises GimbalLockError instead of regularizing;
# silently flattening the singularity would mask controller failures.
GIMBAL_TOLERANCE = 1e-6

RPM_TO_RAD_S = 2.0 * math.pi / 60.0


def _vec(x, n: int) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.shape != (n,):
        raise ValueError(f"expected a {n}-vector, got shape {v.shape}")
    return v


@dataclass(frozen=True)
class BodyParams:
    """Mass, geometry and rotor constants of the airframe."""

    mass: float                # kg
    arm_length: float          # m, hub to rotor axis
    thrust_coeff: float        # kg*m, rotor thrust per (rad/s)^2
    drag_torque_coeff: float   # kg*m^2, rotor yaw torque per (rad/s)^2
    inertia: np.ndarray        # kg*m^2, principal diagonal (Ixx, Iyy, Izz)
    rotor_speed_max: float     # rad/s
    rotor_accel_max: float     # rad/s^2

    def __post_init__(self):
        object.__setattr__(self, "inertia", _vec(self.inertia, 3))
        scalars = (self.mass, self.arm_length, self.thrust_coeff,
                   self.drag_torque_coeff, self.rotor_speed_max,
                   self.rotor_accel_max)
        if min(scalars) <= 0.0 or np.min(self.inertia) <= 0.0:
            raise ValueError("all body parameters must be strictly positive")

    @property
    def inertia_matrix(self) -> np.ndarray:
        return np.diag(self.inertia)

    @classmethod
    def default(cls) -> "BodyParams":
        """Benchmark airframe used by the bundled scenario (0.5 kg quad,
        rotor speed limit 58800 rpm, rotor acceleration limit 1000 rad/s^2)."""
        return cls(
            mass=0.5,
            arm_length=0.225,
            thrust_coeff=2.98e-6,
            drag_torque_coeff=1.14e-7,
            inertia=np.array([4.856e-3, 4.856e-3, 8.801e-3]),
            rotor_speed_max=58800.0 * RPM_TO_RAD_S,
            rotor_accel_max=1000.0,
        )


@dataclass(frozen=True)
class EnvParams:
    """Gravity and air-drag environment."""

    gravity: float = 9.81         # m/s^2
    air_density: float = 1.225    # kg/m^3
    drag_coeff: float = 1.0       # dimensionless
    areas: np.ndarray = (0.01, 0.01, 0.01)  # m^2, body YZ/XZ/XY projections

    def __post_init__(self):
        object.__setattr__(self, "areas", _vec(self.areas, 3))
        if self.gravity <= 0.0:
            raise ValueError("gravity must be positive")
        if self.air_density < 0.0 or self.drag_coeff < 0.0 or np.min(self.areas) < 0.0:
            raise ValueError("density, drag coefficient and areas must be nonnegative")

    def without_drag(self) -> "EnvParams":
        return replace(self, drag_coeff=0.0)


@dataclass
class RigidState:
    """Full vehicle state: position/velocity in the inertial frame, Euler
    angles, and body-frame angular rates."""

    position: np.ndarray   # m
    velocity: np.ndarray   # m/s
    angles: np.ndarray     # rad, (roll, pitch, yaw)
    rates: np.ndarray      # rad/s, body frame

    def __post_init__(self):
        self.position = _vec(self.position, 3)
        self.velocity = _vec(self.velocity, 3)
        self.angles = _vec(self.angles, 3)
        self.rates = _vec(self.rates, 3)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.velocity, self.angles, self.rates])

    @classmethod
    def from_vector(cls, y: np.ndarray) -> "RigidState":
        y = np.asarray(y, dtype=float)
        return cls(y[0:3].copy(), y[3:6].copy(), y[6:9].copy(), y[9:12].copy())

    def copy(self) -> "RigidState":
        return RigidState(self.position.copy(), self.velocity.copy(),
                          self.angles.copy(), self.rates.copy())


@dataclass(frozen=True)
class ControlInput:
    """Total thrust along the body z axis plus roll/pitch/yaw body torques."""

    thrust: float          # N
    torque: np.ndarray     # N*m

    def __post_init__(self):
        object.__setattr__(self, "torque", _vec(self.torque, 3))
        if self.thrust < 0.0:
            raise ValueError("thrust must be nonnegative")


@dataclass(frozen=True)
class RotorSpeeds:
    """Angular speeds of the four rotors, rad/s."""

    speeds: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "speeds", _vec(self.speeds, 4))
        if np.min(self.speeds) < 0.0:
            raise ValueError("rotor speeds must be nonnegative")


@dataclass(frozen=True)
class WindSample:
    """Wind velocity in the inertial frame, m/s."""

    vector: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vector", _vec(self.vector, 3))
        if not np.all(np.isfinite(self.vector)):
            raise ValueError("wind components must be finite")


def rotation_matrix(angles: np.ndarray) -> np.ndarray:
    """Body-to-inertial rotation Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    cr, sr = math.cos(angles[0]), math.sin(angles[0])
    cp, sp = math.cos(angles[1]), math.sin(angles[1])
    cy, sy = math.cos(angles[2]), math.sin(angles[2])
    return np.array([
        [cp * cy, sr * sp * cy - cr * sy, cr * sp * cy + sr * sy],
        [cp * sy, sr * sp * sy + cr * cy, cr * sp * sy - sr * cy],
        [-sp, sr * cp, cr * cp],
    ])


def _check_gimbal(cp: float) -> None:
    if abs(cp) <= GIMBAL_TOLERANCE:
        raise GimbalLockError("pitch within tolerance of +/-90 degrees")


def body_rate_map(angles: np.ndarray) -> np.ndarray:
    """Matrix W with body_rates = W @ euler_rates. det(W) = cos(pitch)."""
    cr, sr = math.cos(angles[0]), math.sin(angles[0])
    cp, sp = math.cos(angles[1]), math.sin(angles[1])
    _check_gimbal(cp)
    return np.array([
        [1.0, 0.0, -sp],
        [0.0, cr, sr * cp],
        [0.0, -sr, cr * cp],
    ])


def body_rate_map_inverse(angles: np.ndarray) -> np.ndarray:
    """Closed-form inverse of ``body_rate_map``: euler_rates = Winv @ body_rates."""
    cr, sr = math.cos(angles[0]), math.sin(angles[0])
    cp, sp = math.cos(angles[1]), math.sin(angles[1])
    _check_gimbal(cp)
    tp = sp / cp
    return np.array([
        [1.0, sr * tp, cr * tp],
        [0.0, cr, -sr],
        [0.0, sr / cp, cr / cp],
    ])


def body_rate_map_dot(angles: np.ndarray, angle_rates: np.ndarray) -> np.ndarray:
    """Time derivative of ``body_rate_map`` along (angles, angle_rates)."""
    cr, sr = math.cos(angles[0]), math.sin(angles[0])
    cp, sp = math.cos(angles[1]), math.sin(angles[1])
    dr, dp = angle_rates[0], angle_rates[1]
    return np.array([
        [0.0, 0.0, -cp * dp],
        [0.0, -sr * dr, cr * dr * cp - sr * sp * dp],
        [0.0, -cr * dr, -sr * dr * cp - cr * sp * dp],
    ])


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.array([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def euler_torque(angles: np.ndarray, angle_rates: np.ndarray,
                 angle_accels: np.ndarray, params: BodyParams) -> np.ndarray:
    """Body torque that realizes the given Euler-angle acceleration.

    Substituting body_rates = W @ euler_rates into the Newton-Euler rotation
    equation gives tau = I (W ddeta + Wdot deta) + (W deta) x (I W deta).
    """
    w = body_rate_map(angles)
    wd = body_rate_map_dot(angles, angle_rates)
    inertia = params.inertia
    omega = w @ angle_rates
    return inertia * (w @ angle_accels + wd @ angle_rates) + _cross(omega, inertia * omega)


def euler_inertia(angles: np.ndarray, params: BodyParams) -> np.ndarray:
    """Acceleration-to-torque matrix M(eta) = I @ W of the rotation dynamics."""
    return params.inertia[:, None] * body_rate_map(angles)


def euler_bias(angles: np.ndarray, angle_rates: np.ndarray,
               params: BodyParams) -> np.ndarray:
    """Rate-dependent torque bias V(eta, deta) of the rotation dynamics."""
    return euler_torque(angles, angle_rates, np.zeros(3), params)


def rotor_forces(rotors: RotorSpeeds, params: BodyParams) -> ControlInput:
    """Total thrust and body torques produced by the four rotors.

    Rotors 1 and 3 sit on the body x axis, rotors 2 and 4 on the body y
    axis; 1 and 3 spin clockwise, 2 and 4 counterclockwise.
    """
    s = rotors.speeds ** 2
    kt = params.thrust_coeff
    arm = params.arm_length
    thrust = kt * s.sum()
    tau = np.array([
        arm * kt * (s[3] - s[1]),
        arm * kt * (s[2] - s[0]),
        params.drag_torque_coeff * (-s[0] + s[1] - s[2] + s[3]),
    ])
    return ControlInput(thrust, tau)


def rotor_mix_squares(u: ControlInput, params: BodyParams) -> np.ndarray:
    """Closed-form inverse of ``rotor_forces`` in rotor-speed squares.

    May return negative entries when the request is infeasible; callers
    decide whether to clamp or reject.
    """
    kt = params.thrust_coeff
    arm = params.arm_length
    base = u.thrust / (4.0 * kt)
    roll = u.torque[0] / (2.0 * arm * kt)
    pitch = u.torque[1] / (2.0 * arm * kt)
    yaw = u.torque[2] / (4.0 * params.drag_torque_coeff)
    return np.array([
        base - pitch - yaw,
        base - roll + yaw,
        base + pitch - yaw,
        base + roll + yaw,
    ])


def rotor_mix(u: ControlInput, params: BodyParams) -> RotorSpeeds:
    """Rotor speeds realizing a thrust/torque command exactly.

    Raises InfeasibleThrustError when a rotor would need a negative speed
    squared and RotorSaturationError when a rotor exceeds the speed limit.
    """
    squares = rotor_mix_squares(u, params)
    scale = max(float(np.max(np.abs(squares))), 1.0)
    if np.min(squares) < -1e-9 * scale:
        raise InfeasibleThrustError(
            f"command needs negative rotor speed squared: {squares}")
    speeds = np.sqrt(np.clip(squares, 0.0, None))
    if np.max(speeds) > params.rotor_speed_max:
        raise RotorSaturationError(
            f"rotor speed {np.max(speeds):.1f} rad/s exceeds limit "
            f"{params.rotor_speed_max:.1f} rad/s")
    return RotorSpeeds(speeds)


def drag_force(state: RigidState, wind: WindSample, env: EnvParams) -> np.ndarray:
    """Aerodynamic friction force from relative wind, inertial frame.

    The exposed area is the sum of the three body-face areas weighted by the
    direction cosines of the relative velocity; at zero relative velocity the
    area (and the force) is defined as zero.
    """
    v_rel = wind.vector - state.velocity
    speed = math.sqrt(float(v_rel @ v_rel))
    if speed == 0.0 or env.drag_coeff == 0.0:
        return np.zeros(3)
    rot = rotation_matrix(state.angles)
    area = float(env.areas @ np.abs(rot.T @ v_rel)) / speed
    return 0.5 * env.drag_coeff * env.air_density * speed * area * v_rel


def state_derivative(state: RigidState, u: ControlInput, wind: WindSample,
                     params: BodyParams, env: EnvParams) -> np.ndarray:
    """Time derivative of the state as a 12-vector
    (d position, d velocity, d angles, d rates)."""
    return _derivative(state.as_vector(), u.thrust, u.torque, wind.vector,
                       params, env)


def _derivative(y: np.ndarray, thrust: float, torque: np.ndarray,
                wind: np.ndarray, params: BodyParams, env: EnvParams) -> np.ndarray:
    vel = y[3:6]
    angles = y[6:9]
    omega = y[9:12]

    cr, sr = math.cos(angles[0]), math.sin(angles[0])
    cp, sp = math.cos(angles[1]), math.sin(angles[1])
    cy, sy = math.cos(angles[2]), math.sin(angles[2])
    _check_gimbal(cp)

    rot = np.array([
        [cp * cy, sr * sp * cy - cr * sy, cr * sp * cy + sr * sy],
        [cp * sy, sr * sp * sy + cr * cy, cr * sp * sy - sr * cy],
        [-sp, sr * cp, cr * cp],
    ])

    accel = (thrust / params.mass) * rot[:, 2]
    accel[2] -= env.gravity

    if env.drag_coeff > 0.0:
        v_rel = wind - vel
        speed = math.sqrt(float(v_rel @ v_rel))
        if speed > 0.0:
            area = float(env.areas @ np.abs(rot.T @ v_rel)) / speed
            accel += (0.5 * env.drag_coeff * env.air_density * speed * area
                      / params.mass) * v_rel

    tp = sp / cp
    winv = np.array([
        [1.0, sr * tp, cr * tp],
        [0.0, cr, -sr],
        [0.0, sr / cp, cr / cp],
    ])
    angle_rates = winv @ omega

    inertia = params.inertia
    i_om = inertia * omega
    gyro = np.array([
        omega[1] * i_om[2] - omega[2] * i_om[1],
        omega[2] * i_om[0] - omega[0] * i_om[2],
        omega[0] * i_om[1] - omega[1] * i_om[0],
    ])
    omega_dot = (torque - gyro) / inertia

    out = np.empty(12)
    out[0:3] = vel
    out[3:6] = accel
    out[6:9] = angle_rates
    out[9:12] = omega_dot
    return out


def integrate_step(state: RigidState, u: ControlInput, wind: WindSample,
                   dt: float, params: BodyParams, env: EnvParams) -> RigidState:
    """One classical fourth-order Runge-Kutta step with inputs held constant."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    y = state.as_vector()
    thrust, torque, w = u.thrust, u.torque, wind.vector
    k1 = _derivative(y, thrust, torque, w, params, env)
    k2 = _derivative(y + 0.5 * dt * k1, thrust, torque, w, params, env)
    k3 = _derivative(y + 0.5 * dt * k2, thrust, torque, w, params, env)
    k4 = _derivative(y + dt * k3, thrust, torque, w, params, env)
    return RigidState.from_vector(y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
