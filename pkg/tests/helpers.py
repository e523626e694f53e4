"""Shared builders for the test suite."""

import numpy as np

from flatquad import (
    BodyParams,
    EnvParams,
    FlatSample,
    GainSet,
    Scenario,
    StrategyKind,
    WaypointSet,
    WindProfile,
)

GRAVITY = 9.81

BENCH_POINTS = np.array([
    [0.0, 0.0, 5.0],
    [0.4, 0.9, 6.0],
    [1.4, 1.2, 6.5],
    [2.0, 0.8, 5.7],
    [1.5, -0.5, 5.0],
])
BENCH_TIMES = np.array([0.0, 3.0, 5.5, 7.0, 10.0])

TORQUE_GAINS = GainSet(kp=(225.0, 225.0, 225.0), kd=(30.0, 30.0, 30.0),
                       ki=(0.0, 0.0, 0.0))
ATTITUDE_GAINS = GainSet(kp=(25.0, 25.0, 9.0), kd=(10.0, 10.0, 6.0),
                         ki=(1.0, 1.0, 0.3))

NORTH_EAST = np.array([1.0, 1.0, 0.0]) / np.sqrt(2.0)

GUST_25KMH = WindProfile(kind="ramp_gust", direction=NORTH_EAST,
                         peak_speed=25.0 / 3.6, t_start=0.5, t_rise=1.5,
                         t_hold=6.5, t_fall=1.0)


def bench_env(drag: bool = True) -> EnvParams:
    env = EnvParams(areas=(0.001, 0.001, 0.001))
    return env if drag else env.without_drag()


def bench_scenario(strategy: StrategyKind = StrategyKind.COMBINED,
                   wind: WindProfile | None = None,
                   drag: bool = True, yaw_end_deg: float = 10.0,
                   **overrides) -> Scenario:
    return Scenario(
        waypoints=WaypointSet(BENCH_POINTS, BENCH_TIMES),
        body=BodyParams.default(),
        env=bench_env(drag),
        torque_gains=TORQUE_GAINS,
        attitude_gains=ATTITUDE_GAINS,
        strategy=strategy,
        wind=wind if wind is not None else WindProfile.none(),
        yaw_end=np.radians(yaw_end_deg),
        **overrides,
    )


class PolyFlatTrajectory:
    """Smooth synthetic flat trajectory from per-channel polynomials."""

    def __init__(self, coefficients: np.ndarray, gravity: float = GRAVITY):
        self.gravity = gravity
        self._derivs = []
        for c in coefficients:
            p = np.polynomial.Polynomial(c)
            self._derivs.append([p] + [p.deriv(k) for k in range(1, 5)])

    @classmethod
    def random(cls, rng: np.random.Generator, amplitude: float = 0.5,
               degree: int = 5) -> "PolyFlatTrajectory":
        # decaying coefficient scale keeps accelerations inside the envelope
        scale = amplitude / (1.0 + np.arange(degree + 1)) ** 2.5
        coef = rng.normal(size=(4, degree + 1)) * scale
        coef[2, 0] += 5.0
        return cls(coef)

    def sample(self, t: float) -> FlatSample:
        stack = np.array([[dp[k](t) for dp in self._derivs] for k in range(5)])
        return FlatSample(t, stack[0], stack[1], stack[2], stack[3], stack[4],
                          self.gravity)


def hover_sample(t: float = 0.0, altitude: float = 5.0,
                 yaw_half_tan: float = 0.0,
                 gravity: float = GRAVITY) -> FlatSample:
    z = np.array([0.0, 0.0, altitude, yaw_half_tan])
    zero = np.zeros(4)
    return FlatSample(t, z, zero, zero, zero, zero, gravity)
