import math

import numpy as np
import pytest

from flatquad import (
    BodyParams,
    ControlInput,
    EnvParams,
    GimbalLockError,
    InfeasibleThrustError,
    RigidState,
    RotorSaturationError,
    RotorSpeeds,
    WindSample,
    body_rate_map,
    body_rate_map_inverse,
    drag_force,
    integrate_step,
    rotation_matrix,
    rotor_forces,
    rotor_mix,
    state_derivative,
)
from flatquad.rigid_body import RPM_TO_RAD_S, body_rate_map_dot

G = 9.81


def hover_state(altitude=5.0):
    return RigidState(np.array([0.0, 0.0, altitude]), np.zeros(3),
                      np.zeros(3), np.zeros(3))


def hover_input(p):
    return ControlInput(p.mass * G, np.zeros(3))


def no_wind():
    return WindSample(np.zeros(3))


class TestRotation:
    def test_zero_angles_is_identity(self):
        assert np.allclose(rotation_matrix(np.zeros(3)), np.eye(3), atol=1e-15)

    def test_quarter_turn_yaw(self):
        r = rotation_matrix(np.array([0.0, 0.0, np.pi / 2]))
        expected = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1]], dtype=float)
        assert np.allclose(r, expected, atol=1e-15)

    def test_orthonormal_with_unit_determinant(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            angles = rng.uniform(-np.pi, np.pi, 3)
            r = rotation_matrix(angles)
            assert np.max(np.abs(r.T @ r - np.eye(3))) < 1e-12
            assert abs(np.linalg.det(r) - 1.0) < 1e-12


class TestBodyRateMap:
    def test_zero_angles_is_identity(self):
        assert np.allclose(body_rate_map(np.zeros(3)), np.eye(3), atol=1e-15)

    def test_gimbal_lock_raises(self):
        with pytest.raises(GimbalLockError):
            body_rate_map(np.array([0.0, np.pi / 2, 0.0]))
        with pytest.raises(GimbalLockError):
            body_rate_map_inverse(np.array([0.3, -np.pi / 2, 0.1]))

    def test_closed_form_inverse(self):
        rng = np.random.default_rng(11)
        for _ in range(500):
            angles = rng.uniform(-1.0, 1.0, 3)
            w = body_rate_map(angles)
            winv = body_rate_map_inverse(angles)
            assert np.max(np.abs(w @ winv - np.eye(3))) < 1e-12
            assert np.max(np.abs(winv - np.linalg.inv(w))) < 1e-12

    def test_rate_map_derivative_matches_finite_difference(self):
        rng = np.random.default_rng(13)
        h = 1e-6
        for _ in range(50):
            angles = rng.uniform(-1.0, 1.0, 3)
            rates = rng.uniform(-1.0, 1.0, 3)
            fd = (body_rate_map(angles + h * rates)
                  - body_rate_map(angles - h * rates)) / (2 * h)
            assert np.max(np.abs(body_rate_map_dot(angles, rates) - fd)) < 1e-8


class TestRotorModel:
    def test_equal_speeds_cancel_torques(self):
        p = BodyParams.default()
        omega = 400.0
        u = rotor_forces(RotorSpeeds(np.full(4, omega)), p)
        assert np.allclose(u.torque, 0.0, atol=1e-15)
        assert u.thrust == pytest.approx(4.0 * p.thrust_coeff * omega**2)

    def test_zero_speeds_zero_output(self):
        u = rotor_forces(RotorSpeeds(np.zeros(4)), BodyParams.default())
        assert u.thrust == 0.0
        assert np.all(u.torque == 0.0)

    def test_hover_speed_magnitude(self):
        # thrust balance: 4 kT w^2 = m g
        p = BodyParams.default()
        omega = math.sqrt(p.mass * G / (4.0 * p.thrust_coeff))
        assert omega == pytest.approx(641.5, abs=0.1)
        u = rotor_forces(RotorSpeeds(np.full(4, omega)), p)
        assert u.thrust == pytest.approx(p.mass * G, rel=1e-12)

    def test_mix_hover_gives_equal_speeds_inside_limits(self):
        p = BodyParams.default()
        rotors = rotor_mix(ControlInput(p.mass * G, np.zeros(3)), p)
        expected = math.sqrt(p.mass * G / (4.0 * p.thrust_coeff))
        assert np.allclose(rotors.speeds, expected, rtol=1e-12)
        rpm = rotors.speeds[0] / RPM_TO_RAD_S
        assert rpm == pytest.approx(6126, abs=5)
        assert rpm < 58800

    def test_mix_zero_command(self):
        rotors = rotor_mix(ControlInput(0.0, np.zeros(3)), BodyParams.default())
        assert np.all(rotors.speeds == 0.0)

    def test_mix_round_trip_identity(self):
        p = BodyParams.default()
        rng = np.random.default_rng(3)
        for _ in range(200):
            u = ControlInput(p.mass * G * rng.uniform(0.5, 1.8),
                             rng.uniform(-0.02, 0.02, 3))
            back = rotor_forces(rotor_mix(u, p), p)
            assert back.thrust == pytest.approx(u.thrust, rel=1e-9)
            assert np.allclose(back.torque, u.torque, rtol=1e-9, atol=1e-15)

    def test_mix_infeasible_raises(self):
        p = BodyParams.default()
        with pytest.raises(InfeasibleThrustError):
            rotor_mix(ControlInput(0.01, np.array([0.0, 0.0, 0.5])), p)

    def test_mix_saturation_raises(self):
        p = BodyParams.default()
        with pytest.raises(RotorSaturationError):
            rotor_mix(ControlInput(1e4, np.zeros(3)), p)


class TestDrag:
    def test_zero_relative_velocity(self):
        env = EnvParams()
        state = hover_state()
        state.velocity = np.array([1.0, -2.0, 0.5])
        f = drag_force(state, WindSample(state.velocity.copy()), env)
        assert np.all(f == 0.0)

    def test_level_flow_along_x(self):
        env = EnvParams()
        state = hover_state()
        wind = WindSample(np.array([3.0, 0.0, 0.0]))
        f = drag_force(state, wind, env)
        expected = 0.5 * env.drag_coeff * env.air_density * env.areas[0] * 9.0
        assert f[0] == pytest.approx(expected, rel=1e-12)
        assert f[1] == f[2] == 0.0

    def test_matches_direct_formula(self):
        env = EnvParams(areas=(0.013, 0.009, 0.021))
        rng = np.random.default_rng(5)
        for _ in range(200):
            state = RigidState(rng.normal(size=3), rng.normal(size=3),
                               rng.uniform(-1.0, 1.0, 3), rng.normal(size=3))
            wind = WindSample(rng.normal(size=3) * 4.0)
            v_rel = wind.vector - state.velocity
            rot = rotation_matrix(state.angles)
            speed = np.linalg.norm(v_rel)
            area = sum(env.areas[i] * abs(rot[:, i] @ v_rel) / speed
                       for i in range(3))
            expected = (0.5 * env.drag_coeff * env.air_density
                        * speed * area * v_rel)
            got = drag_force(state, wind, env)
            assert np.max(np.abs(got - expected)) < 1e-12 * max(1.0, speed**2)

    def test_odd_in_relative_velocity(self):
        env = EnvParams()
        state = hover_state()
        state.angles = np.array([0.2, -0.3, 0.9])
        f_fwd = drag_force(state, WindSample(np.array([2.0, 1.0, -0.5])), env)
        state.velocity = np.array([4.0, 2.0, -1.0])
        f_rev = drag_force(state, WindSample(np.array([2.0, 1.0, -0.5])), env)
        # v_rel flips sign exactly between the two cases
        assert np.allclose(f_rev, -f_fwd, atol=1e-15)


class TestDynamics:
    def test_hover_equilibrium(self):
        p = BodyParams.default()
        deriv = state_derivative(hover_state(), hover_input(p), no_wind(), p,
                                 EnvParams())
        assert np.max(np.abs(deriv)) < 1e-15

    def test_free_fall(self):
        p = BodyParams.default()
        deriv = state_derivative(hover_state(), ControlInput(0.0, np.zeros(3)),
                                 no_wind(), p, EnvParams().without_drag())
        assert np.allclose(deriv[3:6], [0.0, 0.0, -G])

    def test_gyroscopic_term_matches_cross_product(self):
        p = BodyParams.default()
        rng = np.random.default_rng(17)
        for _ in range(200):
            state = RigidState(np.zeros(3), np.zeros(3),
                               rng.uniform(-1.0, 1.0, 3), rng.normal(size=3))
            torque = rng.normal(size=3) * 1e-3
            deriv = state_derivative(state, ControlInput(1.0, torque),
                                     no_wind(), p, EnvParams().without_drag())
            omega_dot = deriv[9:12]
            residual = (p.inertia * omega_dot
                        + np.cross(state.rates, p.inertia * state.rates)
                        - torque)
            assert np.max(np.abs(residual)) < 1e-12


class TestIntegration:
    def test_hover_is_fixed_point(self):
        p = BodyParams.default()
        state = hover_state()
        nxt = integrate_step(state, hover_input(p), no_wind(), 0.01, p,
                             EnvParams())
        assert np.max(np.abs(nxt.as_vector() - state.as_vector())) < 1e-12

    def test_free_fall_one_second(self):
        p = BodyParams.default()
        env = EnvParams().without_drag()
        state = hover_state(altitude=100.0)
        for _ in range(1000):
            state = integrate_step(state, ControlInput(0.0, np.zeros(3)),
                                   no_wind(), 1e-3, p, env)
        assert state.position[2] == pytest.approx(100.0 - 0.5 * G, abs=1e-6)
        assert state.velocity[2] == pytest.approx(-G, abs=1e-9)

    def test_fourth_order_convergence(self):
        # fast tumbling makes truncation error visible above roundoff
        p = BodyParams.default()
        env = EnvParams().without_drag()
        u = ControlInput(p.mass * G * 1.02, np.array([2e-3, -1e-3, 5e-4]))

        def rollout(dt):
            state = RigidState(np.zeros(3), np.zeros(3),
                               np.array([0.05, -0.08, 0.2]),
                               np.array([6.0, -5.0, 4.0]))
            for _ in range(int(round(0.2 / dt))):
                state = integrate_step(state, u, no_wind(), dt, p, env)
            return state.as_vector()

        ref = rollout(0.00025)
        err_coarse = np.max(np.abs(rollout(0.002) - ref))
        err_fine = np.max(np.abs(rollout(0.001) - ref))
        assert 8.0 < err_coarse / err_fine < 32.0

    def test_ballistic_energy_conserved(self):
        p = BodyParams.default()
        env = EnvParams().without_drag()
        state = RigidState(np.array([0.0, 0.0, 50.0]),
                           np.array([1.0, -2.0, 3.0]),
                           np.array([0.1, 0.2, -0.4]),
                           np.array([0.5, -0.3, 0.8]))

        def energy(s):
            return (0.5 * p.mass * float(s.velocity @ s.velocity)
                    + p.mass * G * s.position[2])

        e0 = energy(state)
        for _ in range(1000):
            state = integrate_step(state, ControlInput(0.0, np.zeros(3)),
                                   no_wind(), 1e-3, p, env)
        assert energy(state) == pytest.approx(e0, rel=1e-10)
