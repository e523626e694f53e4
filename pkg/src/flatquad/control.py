"""Tracking controllers and the three strategy wirings.

The torque controller is a computed-torque law: it inverts the
Euler-coordinate rotation dynamics so the closed loop over an exact model
obeys chosen linear error dynamics. The attitude controller feedback-
linearizes the translational dynamics by correcting the commanded
acceleration with position-error terms and mapping the result through the
acceleration-to-attitude/thrust maps.

Strategies:
  flat_angle    - feedforward thrust, torque loop on the flat angle refs
                  (position open loop);
  flat_position - attitude loop produces thrust and angle refs, torques are
                  pure feedforward evaluated at those refs (angle open loop);
  combined      - attitude loop outside, torque loop inside (both closed).
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .flat_map import (
    FlatStateRef,
    thrust_from_acceleration,
    tilt_from_acceleration,
    yaw_from_half_tan,
)
from .rigid_body import (
    BodyParams,
    ControlInput,
    RigidState,
    body_rate_map_dot,
    body_rate_map_inverse,
    euler_torque,
)


class StrategyKind(enum.Enum):
    FLAT_ANGLE = "flat_angle"
    FLAT_POSITION = "flat_position"
    COMBINED = "combined"


@dataclass(frozen=True)
class GainSet:
    """Diagonal entries of the proportional/derivative/integral gains."""

    kp: np.ndarray
    kd: np.ndarray
    ki: np.ndarray

    def __post_init__(self):
        for name in ("kp", "kd", "ki"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (3,):
                raise ValueError(f"{name} must have three diagonal entries")
            if np.min(v) < 0.0:
                raise ValueError(f"{name} entries must be nonnegative")
            object.__setattr__(self, name, v)


def check_gains(gains: GainSet) -> np.ndarray:
    """Per-axis stability verdict for the third-order error dynamics.

    With an integral term the Routh-Hurwitz conditions are kp, kd, ki > 0 and
    kp * kd > ki. Axes with ki = 0 reduce to second-order error dynamics,
    where kp, kd > 0 suffices.
    """
    ok = np.zeros(3, dtype=bool)
    for axis in range(3):
        kp, kd, ki = gains.kp[axis], gains.kd[axis], gains.ki[axis]
        if ki == 0.0:
            ok[axis] = kp > 0.0 and kd > 0.0
        else:
            ok[axis] = kp > 0.0 and kd > 0.0 and ki > 0.0 and kp * kd > ki
    return ok


def _trapezoid_step(integral: np.ndarray, prev, value: np.ndarray,
                    dt: float, limit: float) -> np.ndarray:
    if prev is not None:
        integral = integral + 0.5 * dt * (prev + value)
    return np.clip(integral, -limit, limit)


@dataclass(frozen=True)
class TorqueLoopRecord:
    """What the torque loop saw at its last step; kept so a rollout can audit
    the closed-loop linearization identity from the outside."""

    angles_ref: np.ndarray
    rates_ref: np.ndarray
    accels_ref: np.ndarray
    integral: np.ndarray


@dataclass
class TorqueCtlState:
    """Accumulated angle-error integral of the torque controller."""

    windup_limit: float = 10.0
    integral: np.ndarray = field(default_factory=lambda: np.zeros(3))
    prev_error: np.ndarray | None = None
    last_record: TorqueLoopRecord | None = None

    def advance(self, error: np.ndarray, dt: float) -> np.ndarray:
        self.integral = _trapezoid_step(self.integral, self.prev_error, error,
                                        dt, self.windup_limit)
        self.prev_error = error.copy()
        return self.integral

    def reset(self) -> None:
        self.integral = np.zeros(3)
        self.prev_error = None
        self.last_record = None


def torque_control(angles: np.ndarray, angles_ref: np.ndarray,
                   angle_rates: np.ndarray, rates_ref: np.ndarray,
                   accels_ref: np.ndarray, state: TorqueCtlState,
                   gains: GainSet, params: BodyParams, dt: float) -> np.ndarray:
    """Computed-torque law for the rotation dynamics.

    ``angle_rates`` are measured Euler-angle rates (body rates mapped through
    the inverse rate map upstream). The returned torque makes the exact-model
    closed loop obey
        dd_err + kd d_err + kp err + ki int(err) = 0.
    """
    error = angles_ref - angles
    rate_error = rates_ref - angle_rates
    integral = state.advance(error, dt)
    servo = accels_ref + gains.kd * rate_error + gains.kp * error + gains.ki * integral
    state.last_record = TorqueLoopRecord(angles_ref.copy(), rates_ref.copy(),
                                         accels_ref.copy(), integral.copy())
    return euler_torque(angles, angle_rates, servo, params)


@dataclass
class AttitudeCtlState:
    """Position-error integrals plus the recent angle-reference history used
    to estimate reference rates for the inner loop."""

    windup_limit: float = 10.0
    integral1: np.ndarray = field(default_factory=lambda: np.zeros(3))
    integral2: np.ndarray = field(default_factory=lambda: np.zeros(3))
    integral3: np.ndarray = field(default_factory=lambda: np.zeros(3))
    prev_error: np.ndarray | None = None
    prev_i1: np.ndarray | None = None
    prev_i2: np.ndarray | None = None
    ref_history: deque = field(default_factory=lambda: deque(maxlen=2))

    def advance(self, error: np.ndarray, dt: float) -> np.ndarray:
        self.integral1 = _trapezoid_step(self.integral1, self.prev_error,
                                         error, dt, self.windup_limit)
        self.integral2 = _trapezoid_step(self.integral2, self.prev_i1,
                                         self.integral1, dt, self.windup_limit)
        self.integral3 = _trapezoid_step(self.integral3, self.prev_i2,
                                         self.integral2, dt, self.windup_limit)
        self.prev_error = error.copy()
        self.prev_i1 = self.integral1.copy()
        self.prev_i2 = self.integral2.copy()
        return self.integral1

    def estimate_ref_rates(self, angles_ref: np.ndarray, dt: float,
                           fallback_rates: np.ndarray,
                           fallback_accels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Backward finite differences of the angle reference over the last
        three samples; falls back to the flat rates until enough history."""
        if len(self.ref_history) < 2:
            return fallback_rates.copy(), fallback_accels.copy()
        r2, r1 = self.ref_history[0], self.ref_history[1]
        rates = (3.0 * angles_ref - 4.0 * r1 + r2) / (2.0 * dt)
        accels = (angles_ref - 2.0 * r1 + r2) / (dt * dt)
        return rates, accels

    def push_ref(self, angles_ref: np.ndarray) -> None:
        self.ref_history.append(angles_ref.copy())

    def reset(self) -> None:
        self.integral1 = np.zeros(3)
        self.integral2 = np.zeros(3)
        self.integral3 = np.zeros(3)
        self.prev_error = None
        self.prev_i1 = None
        self.prev_i2 = None
        self.ref_history.clear()


def attitude_control(position: np.ndarray, velocity: np.ndarray,
                     ref: FlatStateRef, yaw_half_tan_ref: float,
                     state: AttitudeCtlState, gains: GainSet, mass: float,
                     gravity: float, dt: float) -> tuple[float, np.ndarray]:
    """Thrust and angle references that drive the position error to zero.

    The commanded acceleration is the reference acceleration plus
    kd * d_err + kp * err + ki * int(err); pushing it through the
    acceleration-to-attitude and acceleration-to-thrust maps linearizes the
    exact-model translational error dynamics into the same third-order form
    the gain gate checks.
    """
    error = ref.position - position
    rate_error = ref.velocity - velocity
    integral = state.advance(error, dt)
    accel_cmd = (ref.acceleration + gains.kd * rate_error
                 + gains.kp * error + gains.ki * integral)
    roll_ref, pitch_ref = tilt_from_acceleration(accel_cmd, yaw_half_tan_ref,
                                                 gravity)
    thrust = thrust_from_acceleration(accel_cmd, mass, gravity)
    yaw_ref = yaw_from_half_tan(yaw_half_tan_ref)
    return thrust, np.array([roll_ref, pitch_ref, yaw_ref])


@dataclass
class StrategyState:
    """Controller memory owned by a single rollout."""

    torque: TorqueCtlState
    attitude: AttitudeCtlState

    @classmethod
    def create(cls, windup_limit: float = 10.0) -> "StrategyState":
        return cls(TorqueCtlState(windup_limit=windup_limit),
                   AttitudeCtlState(windup_limit=windup_limit))

    def reset(self) -> None:
        self.torque.reset()
        self.attitude.reset()


def strategy_step(kind: StrategyKind, measured: RigidState, ref: FlatStateRef,
                  state: StrategyState, torque_gains: GainSet,
                  attitude_gains: GainSet, params: BodyParams, gravity: float,
                  dt: float) -> ControlInput:
    """One control period of the selected tracking strategy."""
    rates_meas = body_rate_map_inverse(measured.angles) @ measured.rates

    if kind is StrategyKind.FLAT_ANGLE:
        torque = torque_control(measured.angles, ref.angles, rates_meas,
                                ref.angle_rates, ref.angle_accels,
                                state.torque, torque_gains, params, dt)
        return ControlInput(ref.thrust, torque)

    yaw_half_tan_ref = math.tan(0.5 * ref.angles[2])
    thrust, angles_ref = attitude_control(
        measured.position, measured.velocity, ref, yaw_half_tan_ref,
        state.attitude, attitude_gains, params.mass, gravity, dt)
    rates_ref, accels_ref = state.attitude.estimate_ref_rates(
        angles_ref, dt, ref.angle_rates, ref.angle_accels)
    state.attitude.push_ref(angles_ref)

    if kind is StrategyKind.FLAT_POSITION:
        # angle loop stays open: torque is feedforward at the reference
        torque = euler_torque(angles_ref, rates_ref, accels_ref, params)
        state.torque.last_record = TorqueLoopRecord(
            angles_ref.copy(), rates_ref.copy(), accels_ref.copy(),
            state.torque.integral.copy())
    else:
        torque = torque_control(measured.angles, angles_ref, rates_meas,
                                rates_ref, accels_ref, state.torque,
                                torque_gains, params, dt)
    return ControlInput(thrust, torque)


def linearization_residual(measured: RigidState, applied_torque: np.ndarray,
                           record: TorqueLoopRecord, gains: GainSet,
                           params: BodyParams) -> np.ndarray:
    """Closed-loop identity check for the computed-torque law.

    Pushes the applied torque through the body-frame rotation dynamics plus
    Euler kinematics (an independent route from the controller's
    Euler-coordinate inversion) and subtracts the servo acceleration the
    controller intended. Zero up to roundoff whenever the plant matches the
    model.
    """
    winv = body_rate_map_inverse(measured.angles)
    rates = winv @ measured.rates
    i_om = params.inertia * measured.rates
    gyro = np.cross(measured.rates, i_om)
    omega_dot = (applied_torque - gyro) / params.inertia
    wdot = body_rate_map_dot(measured.angles, rates)
    accels_plant = winv @ (omega_dot - wdot @ rates)
    servo = (record.accels_ref
             + gains.kd * (record.rates_ref - rates)
             + gains.kp * (record.angles_ref - measured.angles)
             + gains.ki * record.integral)
    return accels_plant - servo
