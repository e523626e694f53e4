"""Scenario orchestration: trajectory build, closed-loop rollout, metrics.

A rollout runs the selected strategy once per control period, allocates the
command to the four rotors (clamping speeds to their limits and rate bounds,
so the physics never sees an infeasible input), then advances the rigid-body
model through fixed Runge-Kutta substeps. Everything is deterministic:
running the same scenario twice produces bit-identical traces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .control import (
    GainSet,
    StrategyKind,
    StrategyState,
    strategy_step,
)
from .errors import FlatquadError, LengthMismatchError, SimulationAbortError
from .flat_map import FlatStateRef, full_flat_map
from .rigid_body import (
    BodyParams,
    ControlInput,
    EnvParams,
    RigidState,
    RotorSpeeds,
    WindSample,
    body_rate_map,
    integrate_step,
    rotor_forces,
    rotor_mix,
    rotor_mix_squares,
)
from .spline import (
    BSplineCurve,
    WaypointSet,
    YawProfile,
    flat_samples_at,
    sample_flat_trajectory,
    solve_trajectory,
    yaw_profile,
)

WIND_KINDS = ("none", "constant", "ramp_gust", "sinusoidal")


@dataclass(frozen=True)
class WindProfile:
    """Deterministic closed-form wind field, uniform in space."""

    kind: str = "none"
    direction: np.ndarray = (1.0, 0.0, 0.0)
    peak_speed: float = 0.0        # m/s
    t_start: float = 1.0           # ramp gust: onset
    t_rise: float = 2.0            # ramp gust: ramp-up duration
    t_hold: float = 5.0            # ramp gust: plateau duration
    t_fall: float = 2.0            # ramp gust: ramp-down duration
    period: float = 10.0           # sinusoid period

    def __post_init__(self):
        if self.kind not in WIND_KINDS:
            raise ValueError(f"wind kind must be one of {WIND_KINDS}")
        d = np.asarray(self.direction, dtype=float)
        if d.shape != (3,):
            raise ValueError("wind direction must be a 3-vector")
        if self.peak_speed < 0.0:
            raise ValueError("peak speed must be nonnegative")
        if self.kind != "none":
            norm = float(np.linalg.norm(d))
            if norm == 0.0:
                raise ValueError("wind direction must be nonzero")
            d = d / norm
        if min(self.t_rise, self.t_hold, self.t_fall, self.period) <= 0.0 \
                and self.kind in ("ramp_gust", "sinusoidal"):
            raise ValueError("wind timing parameters must be positive")
        object.__setattr__(self, "direction", d)

    @classmethod
    def none(cls) -> "WindProfile":
        return cls(kind="none")

    @classmethod
    def constant(cls, speed: float, direction) -> "WindProfile":
        return cls(kind="constant", peak_speed=speed, direction=direction)


def wind_sample(profile: WindProfile, t: float) -> WindSample:
    """Wind vector at time t."""
    if profile.kind == "none" or profile.peak_speed == 0.0:
        return WindSample(np.zeros(3))
    if profile.kind == "constant":
        return WindSample(profile.peak_speed * profile.direction)
    if profile.kind == "sinusoidal":
        mag = profile.peak_speed * math.sin(2.0 * math.pi * t / profile.period)
        return WindSample(mag * profile.direction)
    # ramp gust: linear rise, plateau, linear fall
    u = t - profile.t_start
    if u <= 0.0:
        mag = 0.0
    elif u < profile.t_rise:
        mag = profile.peak_speed * u / profile.t_rise
    elif u < profile.t_rise + profile.t_hold:
        mag = profile.peak_speed
    elif u < profile.t_rise + profile.t_hold + profile.t_fall:
        mag = profile.peak_speed * (1.0 - (u - profile.t_rise - profile.t_hold)
                                    / profile.t_fall)
    else:
        mag = 0.0
    return WindSample(mag * profile.direction)


@dataclass(frozen=True)
class InitialOffset:
    """Perturbation added to the exact flat initial state."""

    position: np.ndarray = (0.0, 0.0, 0.0)
    velocity: np.ndarray = (0.0, 0.0, 0.0)
    angles: np.ndarray = (0.0, 0.0, 0.0)
    rates: np.ndarray = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for name in ("position", "velocity", "angles", "rates"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (3,):
                raise ValueError(f"{name} offset must be a 3-vector")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class Scenario:
    """Everything one rollout needs, mirroring the scenario file."""

    waypoints: WaypointSet
    body: BodyParams
    env: EnvParams
    torque_gains: GainSet
    attitude_gains: GainSet
    strategy: StrategyKind
    wind: WindProfile = field(default_factory=WindProfile.none)
    spline_order: int = 6
    control_point_count: int = 12
    yaw_start: float = 0.0
    yaw_end: float = 0.0
    control_period: float = 0.01
    physics_substep: float = 0.001
    integral_limit: float = 10.0
    initial_offset: InitialOffset = field(default_factory=InitialOffset)
    name: str = "scenario"

    def __post_init__(self):
        if self.control_period <= 0.0 or self.physics_substep <= 0.0:
            raise ValueError("control period and substep must be positive")
        ratio = self.control_period / self.physics_substep
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("control period must be a multiple of the substep")

    @property
    def duration(self) -> float:
        return self.waypoints.t_end - self.waypoints.t_start

    @property
    def substeps_per_period(self) -> int:
        return int(round(self.control_period / self.physics_substep))


@dataclass(frozen=True)
class TraceRow:
    """One control period of the rollout; rotor speeds stay in memory only."""

    time: float
    position: np.ndarray
    velocity: np.ndarray
    angles: np.ndarray
    rates: np.ndarray
    thrust: float
    torque: np.ndarray
    ref_position: np.ndarray
    ref_angles: np.ndarray
    wind: np.ndarray
    rotor_speeds: np.ndarray


@dataclass(frozen=True)
class Metrics:
    """Rollout summary statistics."""

    iae: float                  # m*s, integral of position-error magnitude
    max_position_error: float   # m
    max_tilt: float             # rad
    saturation_count: int       # control periods with any rotor clamp active


@dataclass(frozen=True)
class StepContext:
    """Snapshot handed to the per-step callback of ``run_scenario``."""

    time: float
    state: RigidState
    ref: FlatStateRef
    commanded: ControlInput
    realized: ControlInput
    rotor_speeds: np.ndarray
    strategy_state: StrategyState
    wind: WindSample


def compute_iae(times, positions, references) -> float:
    """Trapezoidal integral of the Euclidean position-error norm."""
    times = np.asarray(times, dtype=float)
    positions = np.asarray(positions, dtype=float)
    references = np.asarray(references, dtype=float)
    if not (len(times) == len(positions) == len(references)):
        raise LengthMismatchError(
            f"got {len(times)} times, {len(positions)} positions, "
            f"{len(references)} references")
    err = np.linalg.norm(references - positions, axis=1)
    dt = np.diff(times)
    return float(np.sum(0.5 * dt * (err[:-1] + err[1:])))


def build_flat_references(scenario: Scenario) -> tuple[BSplineCurve, YawProfile,
                                                       list[FlatStateRef]]:
    """Trajectory, yaw schedule and per-period references for a scenario."""
    curve = solve_trajectory(scenario.waypoints, scenario.spline_order,
                             scenario.control_point_count)
    yaw = yaw_profile(scenario.yaw_start, scenario.yaw_end,
                      scenario.waypoints.t_start, scenario.waypoints.t_end)
    samples = sample_flat_trajectory(curve, yaw, scenario.control_period,
                                     scenario.env.gravity)
    refs = [full_flat_map(s, scenario.body) for s in samples]
    return curve, yaw, refs


def _midpoint_references(scenario: Scenario, curve: BSplineCurve,
                         yaw: YawProfile, periods: int) -> list[FlatStateRef]:
    """References at the center of each control period.

    A command computed at the period start is held for the whole period;
    sampling the reference at the hold midpoint removes the half-period lag
    the hold would otherwise imprint on the open-loop channels.
    """
    times = (scenario.waypoints.t_start
             + scenario.control_period * (np.arange(periods) + 0.5))
    samples = flat_samples_at(curve, yaw, times, scenario.env.gravity)
    return [full_flat_map(s, scenario.body) for s in samples]


def initial_state(ref: FlatStateRef, offset: InitialOffset) -> RigidState:
    """Exact flat initial state plus the configured perturbation."""
    rates = body_rate_map(ref.angles) @ ref.angle_rates
    return RigidState(
        position=ref.position + offset.position,
        velocity=ref.velocity + offset.velocity,
        angles=ref.angles + offset.angles,
        rates=rates + offset.rates,
    )


def _allocate(u: ControlInput, prev_speeds: np.ndarray, params: BodyParams,
              dt_ctrl: float) -> tuple[np.ndarray, ControlInput, bool]:
    """Rotor speeds for a command, clamped to feasibility.

    Negative speed squares clamp to zero, speeds clamp to the rotor limit and
    to the per-period acceleration bound; the realized thrust/torque is
    recomputed from the clamped speeds so the plant input is always feasible.
    """
    squares = rotor_mix_squares(u, params)
    scale = max(float(np.max(np.abs(squares))), 1.0)
    clamped = bool(np.min(squares) < -1e-9 * scale)
    speeds = np.sqrt(np.clip(squares, 0.0, None))
    if np.max(speeds) > params.rotor_speed_max:
        clamped = True
        speeds = np.minimum(speeds, params.rotor_speed_max)
    max_delta = params.rotor_accel_max * dt_ctrl
    delta = speeds - prev_speeds
    if np.max(np.abs(delta)) > max_delta:
        clamped = True
        speeds = prev_speeds + np.clip(delta, -max_delta, max_delta)
    realized = rotor_forces(RotorSpeeds(speeds), params)
    return speeds, realized, clamped


def run_scenario(scenario: Scenario,
                 on_step: Callable[[StepContext], None] | None = None
                 ) -> tuple[list[TraceRow], Metrics]:
    """Deterministic closed-loop rollout of one scenario.

    Returns one trace row per control period plus a terminal row, and the
    summary metrics. Controller or dynamics failures abort with the offending
    timestamp in the message.
    """
    curve, yaw, refs = build_flat_references(scenario)
    periods = len(refs) - 1
    ctl_refs = _midpoint_references(scenario, curve, yaw, periods)
    state = initial_state(refs[0], scenario.initial_offset)
    ctl = StrategyState.create(scenario.integral_limit)
    prev_speeds = rotor_mix(
        ControlInput(refs[0].thrust, refs[0].torque), scenario.body).speeds

    trace: list[TraceRow] = []
    saturations = 0
    t = scenario.waypoints.t_start
    gravity = scenario.env.gravity
    n_sub = scenario.substeps_per_period
    h = scenario.physics_substep

    for k in range(periods):
        ref = refs[k]
        wind_now = wind_sample(scenario.wind, t)
        try:
            commanded = strategy_step(
                scenario.strategy, state, ctl_refs[k], ctl,
                scenario.torque_gains, scenario.attitude_gains, scenario.body,
                gravity, scenario.control_period)
            speeds, realized, clamped = _allocate(
                commanded, prev_speeds, scenario.body, scenario.control_period)
        except FlatquadError as err:
            raise SimulationAbortError(f"t={t:.4f}: {err}") from err
        prev_speeds = speeds
        if clamped:
            saturations += 1
        trace.append(TraceRow(
            time=t, position=state.position.copy(),
            velocity=state.velocity.copy(), angles=state.angles.copy(),
            rates=state.rates.copy(), thrust=realized.thrust,
            torque=realized.torque.copy(), ref_position=ref.position.copy(),
            ref_angles=ref.angles.copy(), wind=wind_now.vector.copy(),
            rotor_speeds=speeds.copy()))
        if on_step is not None:
            on_step(StepContext(t, state.copy(), ctl_refs[k], commanded,
                                realized, speeds.copy(), ctl, wind_now))
        try:
            for j in range(n_sub):
                sub_t = t + j * h
                state = integrate_step(state, realized,
                                       wind_sample(scenario.wind, sub_t), h,
                                       scenario.body, scenario.env)
        except FlatquadError as err:
            raise SimulationAbortError(f"t={t:.4f}: {err}") from err
        t = scenario.waypoints.t_start + (k + 1) * scenario.control_period

    last = trace[-1]
    trace.append(TraceRow(
        time=t, position=state.position.copy(), velocity=state.velocity.copy(),
        angles=state.angles.copy(), rates=state.rates.copy(),
        thrust=last.thrust, torque=last.torque.copy(),
        ref_position=refs[-1].position.copy(),
        ref_angles=refs[-1].angles.copy(),
        wind=wind_sample(scenario.wind, t).vector.copy(),
        rotor_speeds=last.rotor_speeds.copy()))

    return trace, trace_metrics(trace, saturations)


def trace_metrics(trace: list[TraceRow], saturation_count: int) -> Metrics:
    times = [row.time for row in trace]
    pos = [row.position for row in trace]
    ref = [row.ref_position for row in trace]
    err = np.linalg.norm(np.asarray(ref) - np.asarray(pos), axis=1)
    tilts = [math.acos(min(1.0, max(-1.0, math.cos(row.angles[0])
                                    * math.cos(row.angles[1]))))
             for row in trace]
    return Metrics(
        iae=compute_iae(times, pos, ref),
        max_position_error=float(np.max(err)),
        max_tilt=float(np.max(tilts)),
        saturation_count=saturation_count,
    )


def open_loop_rollout(scenario: Scenario
                      ) -> tuple[np.ndarray, list[RigidState], list[FlatStateRef]]:
    """Integrate the plant under the pure flat feedforward, no feedback.

    The feedforward thrust/torque is evaluated on a half-substep grid so each
    Runge-Kutta stage sees the input at its own stage time; wind is ignored
    (the feedforward knows nothing about it). This isolates how well the flat
    trajectory respects the plant dynamics.
    """
    curve = solve_trajectory(scenario.waypoints, scenario.spline_order,
                             scenario.control_point_count)
    yaw = yaw_profile(scenario.yaw_start, scenario.yaw_end,
                      scenario.waypoints.t_start, scenario.waypoints.t_end)
    h = scenario.physics_substep
    steps = int(round(scenario.duration / h))
    half_times = scenario.waypoints.t_start + 0.5 * h * np.arange(2 * steps + 1)
    samples = flat_samples_at(curve, yaw, half_times, scenario.env.gravity)
    refs = [full_flat_map(s, scenario.body) for s in samples]

    state = initial_state(refs[0], scenario.initial_offset)
    states = [state.copy()]
    no_wind = np.zeros(3)
    env = scenario.env
    body = scenario.body

    from .rigid_body import _derivative  # inner loop needs the vector form

    y = state.as_vector()
    for k in range(steps):
        u0, um, u1 = refs[2 * k], refs[2 * k + 1], refs[2 * k + 2]
        k1 = _derivative(y, u0.thrust, u0.torque, no_wind, body, env)
        k2 = _derivative(y + 0.5 * h * k1, um.thrust, um.torque, no_wind, body, env)
        k3 = _derivative(y + 0.5 * h * k2, um.thrust, um.torque, no_wind, body, env)
        k4 = _derivative(y + h * k3, u1.thrust, u1.torque, no_wind, body, env)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        states.append(RigidState.from_vector(y))

    grid_times = half_times[::2]
    grid_refs = refs[::2]
    return grid_times, states, grid_refs


def hover_scenario(position, duration: float, body: BodyParams,
                   env: EnvParams, torque_gains: GainSet,
                   attitude_gains: GainSet,
                   strategy: StrategyKind = StrategyKind.COMBINED) -> Scenario:
    """Hold one position: a degenerate two-waypoint scenario."""
    p = np.asarray(position, dtype=float)
    return Scenario(
        waypoints=WaypointSet(np.array([p, p]), np.array([0.0, duration])),
        body=body, env=env, torque_gains=torque_gains,
        attitude_gains=attitude_gains, strategy=strategy,
    )
