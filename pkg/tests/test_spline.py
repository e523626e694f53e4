import math

import numpy as np
import pytest

from flatquad import (
    BSplineCurve,
    DegenerateAccelerationError,
    InfeasibleConstraintsError,
    KnotVector,
    OrderTooHighError,
    WaypointSet,
    basis_derivative,
    basis_eval,
    curve_eval,
    sample_flat_trajectory,
    solve_trajectory,
    yaw_profile,
)
from flatquad.spline import curve_from_text, curve_to_text, gram_matrix

from helpers import BENCH_POINTS, BENCH_TIMES, GRAVITY


def random_clamped(rng, order=None, n_ctrl=None, span=(0.0, 10.0)):
    order = order if order is not None else int(rng.integers(4, 8))
    n_ctrl = n_ctrl if n_ctrl is not None else order + int(rng.integers(0, 7))
    return KnotVector.clamped_uniform(span[0], span[1], n_ctrl, order)


class TestBasis:
    def test_order_one_is_span_indicator(self):
        kv = KnotVector(np.array([0.0, 0.0, 1.0, 2.0, 3.0, 3.0]), 2)
        assert basis_eval(kv, 1, 1, 0.5) == 1.0
        assert basis_eval(kv, 1, 1, 1.5) == 0.0
        assert basis_eval(kv, 2, 1, 1.0) == 1.0

    def test_hand_computed_quadratic_value(self):
        # uniform knots {0,1,2,3}: the order-3 function peaks at 0.75
        kv = KnotVector(np.array([0.0, 1.0, 2.0, 3.0]), 3)
        assert basis_eval(kv, 0, 3, 1.5) == pytest.approx(0.75, abs=1e-15)

    def test_partition_of_unity(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            kv = random_clamped(rng)
            for t in rng.uniform(0.0, 10.0, 10):
                total = sum(basis_eval(kv, i, kv.order, t)
                            for i in range(kv.n_basis))
                assert abs(total - 1.0) < 1e-12

    def test_local_support_and_nonnegative(self):
        rng = np.random.default_rng(29)
        kv = random_clamped(rng, order=5, n_ctrl=9)
        d = kv.order
        for i in range(kv.n_basis):
            lo, hi = kv.knots[i], kv.knots[i + d]
            for t in np.linspace(0.0, 10.0, 101):
                v = basis_eval(kv, i, d, t)
                assert v >= 0.0
                if t < lo - 1e-12 or t > hi + 1e-12:
                    assert v == 0.0

    def test_index_out_of_range(self):
        kv = KnotVector.clamped_uniform(0.0, 1.0, 6, 4)
        with pytest.raises(IndexError):
            basis_eval(kv, 6, 4, 0.5)
        with pytest.raises(IndexError):
            basis_derivative(kv, -1, 4, 0.5, 1)


class TestBasisDerivative:
    def test_zeroth_derivative_equals_value(self):
        rng = np.random.default_rng(31)
        kv = random_clamped(rng, order=6, n_ctrl=12)
        for t in rng.uniform(0.0, 10.0, 20):
            for i in range(kv.n_basis):
                assert basis_derivative(kv, i, 6, t, 0) == \
                    pytest.approx(basis_eval(kv, i, 6, t), abs=1e-15)

    def test_derivatives_of_partition_sum_to_zero(self):
        rng = np.random.default_rng(37)
        kv = random_clamped(rng, order=6, n_ctrl=11)
        for r in (1, 2, 3, 4):
            for t in rng.uniform(0.5, 9.5, 10):
                total = sum(basis_derivative(kv, i, 6, t, r)
                            for i in range(kv.n_basis))
                assert abs(total) < 1e-12

    def test_quadratic_peak_has_zero_slope(self):
        kv = KnotVector(np.array([0.0, 1.0, 2.0, 3.0]), 3)
        assert basis_derivative(kv, 0, 3, 1.5, 1) == pytest.approx(0.0, abs=1e-15)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(41)
        kv = random_clamped(rng, order=6, n_ctrl=10)
        h = 1e-5
        for t in rng.uniform(0.5, 9.5, 20):
            for i in range(kv.n_basis):
                fd = (basis_eval(kv, i, 6, t + h)
                      - basis_eval(kv, i, 6, t - h)) / (2 * h)
                assert basis_derivative(kv, i, 6, t, 1) == \
                    pytest.approx(fd, abs=1e-6)

    def test_order_too_high(self):
        kv = KnotVector.clamped_uniform(0.0, 1.0, 6, 4)
        with pytest.raises(OrderTooHighError):
            basis_derivative(kv, 0, 4, 0.5, 4)


class TestCurve:
    def test_clamped_interpolates_end_control_points(self):
        rng = np.random.default_rng(43)
        kv = KnotVector.clamped_uniform(0.0, 10.0, 9, 6)
        pts = rng.normal(size=(9, 3))
        curve = BSplineCurve(kv, pts)
        assert np.allclose(curve.eval(0.0), pts[0], atol=1e-14)
        assert np.allclose(curve.eval(10.0), pts[-1], atol=1e-14)

    def test_constant_control_points_constant_curve(self):
        kv = KnotVector.clamped_uniform(0.0, 5.0, 8, 5)
        curve = BSplineCurve(kv, np.tile([1.0, -2.0, 3.0], (8, 1)))
        for t in np.linspace(0.0, 5.0, 23):
            assert np.allclose(curve.eval(t), [1.0, -2.0, 3.0], atol=1e-13)
            assert np.allclose(curve.eval(t, 1), 0.0, atol=1e-13)

    def test_convex_hull_property(self):
        rng = np.random.default_rng(47)
        for _ in range(20):
            kv = random_clamped(rng, order=6, n_ctrl=12)
            pts = rng.normal(size=(12, 3))
            curve = BSplineCurve(kv, pts)
            lo, hi = pts.min(axis=0), pts.max(axis=0)
            for t in rng.uniform(0.0, 10.0, 25):
                v = curve.eval(t)
                assert np.all(v >= lo - 1e-12) and np.all(v <= hi + 1e-12)

    def test_eval_outside_domain_raises(self):
        kv = KnotVector.clamped_uniform(0.0, 1.0, 6, 5)
        curve = BSplineCurve(kv, np.zeros((6, 3)))
        with pytest.raises(ValueError):
            curve_eval(curve, 1.5)

    def test_text_round_trip(self):
        rng = np.random.default_rng(53)
        kv = KnotVector.clamped_uniform(0.0, 10.0, 12, 6)
        curve = BSplineCurve(kv, rng.normal(size=(12, 3)))
        back = curve_from_text(curve_to_text(curve))
        assert np.array_equal(back.kv.knots, curve.kv.knots)
        assert np.array_equal(back.control_points, curve.control_points)


class TestSolveTrajectory:
    def test_two_waypoints_straight_line(self):
        # the constrained minimizer of integrated squared velocity is the
        # constant-velocity segment, with cost |w1 - w0|^2 / (t1 - t0)
        w0, w1 = np.array([0.0, 1.0, 5.0]), np.array([2.0, -1.0, 6.0])
        wp = WaypointSet(np.array([w0, w1]), np.array([0.0, 4.0]))
        curve = solve_trajectory(wp, order=6, n_ctrl=10)
        for t in np.linspace(0.0, 4.0, 17):
            expected = w0 + (w1 - w0) * t / 4.0
            assert np.max(np.abs(curve.eval(t) - expected)) < 1e-9
        gram = gram_matrix(curve.kv)
        cost = sum(curve.control_points[:, c] @ gram @ curve.control_points[:, c]
                   for c in range(3))
        assert cost == pytest.approx(float((w1 - w0) @ (w1 - w0)) / 4.0, rel=1e-9)

    def test_benchmark_waypoints_interpolated(self):
        wp = WaypointSet(BENCH_POINTS, BENCH_TIMES)
        curve = solve_trajectory(wp, order=6, n_ctrl=12)
        for t, w in zip(BENCH_TIMES, BENCH_POINTS):
            assert np.linalg.norm(curve.eval(t) - w) < 1e-6

    def test_square_system_interpolates(self):
        rng = np.random.default_rng(59)
        pts = rng.normal(size=(5, 3))
        wp = WaypointSet(pts, np.array([0.0, 1.0, 2.5, 3.5, 5.0]))
        curve = solve_trajectory(wp, order=5, n_ctrl=5)
        for t, w in zip(wp.times, pts):
            assert np.linalg.norm(curve.eval(t) - w) < 1e-8

    def test_too_few_control_points_rejected(self):
        wp = WaypointSet(BENCH_POINTS, BENCH_TIMES)
        with pytest.raises(InfeasibleConstraintsError):
            solve_trajectory(wp, order=5, n_ctrl=4)

    def test_kkt_gradient_in_constraint_row_space(self):
        wp = WaypointSet(BENCH_POINTS, BENCH_TIMES)
        curve = solve_trajectory(wp, order=6, n_ctrl=12)
        from flatquad.spline import _basis_row
        a = np.array([_basis_row(curve.kv, 6, t) for t in wp.times])
        gram = gram_matrix(curve.kv)
        for c in range(3):
            grad = gram @ curve.control_points[:, c]
            coeffs, *_ = np.linalg.lstsq(a.T, grad, rcond=None)
            assert np.linalg.norm(grad - a.T @ coeffs) < 1e-8

    def test_quadrature_already_exact(self):
        kv = KnotVector.clamped_uniform(0.0, 10.0, 12, 6)
        base = gram_matrix(kv)
        refined = gram_matrix(kv, n_nodes=2 * 6 + 3)
        assert np.max(np.abs(base - refined)) < 1e-12


class TestYawProfile:
    def test_constant_when_endpoints_match(self):
        yp = yaw_profile(0.0, 0.0, 0.0, 10.0)
        for t in np.linspace(0.0, 10.0, 11):
            assert yp.eval(t) == 0.0
            assert yp.eval(t, 1) == 0.0

    def test_rest_to_rest_boundary_conditions(self):
        yp = yaw_profile(0.0, math.radians(10.0), 0.0, 10.0)
        assert yp.eval(0.0) == pytest.approx(0.0, abs=1e-15)
        assert yp.eval(10.0) == pytest.approx(math.tan(math.radians(5.0)),
                                              rel=1e-12)
        for r in (1, 2, 3, 4):
            assert yp.eval(0.0, r) == pytest.approx(0.0, abs=1e-12)
            assert yp.eval(10.0, r) == pytest.approx(0.0, abs=1e-12)

    def test_rate_symmetric_about_midpoint(self):
        yp = yaw_profile(0.0, math.radians(10.0), 0.0, 10.0)
        peak = yp.eval(5.0, 1)
        assert peak > 0.0 and math.isfinite(peak)
        for x in (0.5, 1.5, 3.0):
            assert yp.eval(5.0 - x, 1) == pytest.approx(yp.eval(5.0 + x, 1),
                                                        rel=1e-10)

    def test_rejects_half_turn(self):
        with pytest.raises(ValueError):
            yaw_profile(0.0, math.pi, 0.0, 10.0)


class TestFlatSampling:
    def test_constant_curve_gives_hover_samples(self):
        kv = KnotVector.clamped_uniform(0.0, 10.0, 8, 6)
        curve = BSplineCurve(kv, np.tile([0.0, 0.0, 5.0], (8, 1)))
        yp = yaw_profile(0.0, 0.0, 0.0, 10.0)
        samples = sample_flat_trajectory(curve, yp, 0.5, GRAVITY)
        assert len(samples) == 21
        for s in samples:
            assert np.allclose(s.z, [0.0, 0.0, 5.0, 0.0], atol=1e-12)
            for stack in (s.dz, s.d2z, s.d3z, s.d4z):
                assert np.allclose(stack, 0.0, atol=1e-12)

    def test_benchmark_sampling_hits_waypoints(self):
        wp = WaypointSet(BENCH_POINTS, BENCH_TIMES)
        curve = solve_trajectory(wp, order=6, n_ctrl=12)
        yp = yaw_profile(0.0, math.radians(10.0), 0.0, 10.0)
        samples = sample_flat_trajectory(curve, yp, 0.01, GRAVITY)
        assert len(samples) == 1001
        at_3s = samples[300]
        assert at_3s.time == pytest.approx(3.0, abs=1e-12)
        assert np.linalg.norm(at_3s.z[:3] - BENCH_POINTS[1]) < 1e-6

    def test_sampled_rates_consistent_with_positions(self):
        wp = WaypointSet(BENCH_POINTS, BENCH_TIMES)
        curve = solve_trajectory(wp, order=6, n_ctrl=12)
        yp = yaw_profile(0.0, math.radians(10.0), 0.0, 10.0)

        def max_fd_error(dt):
            samples = sample_flat_trajectory(curve, yp, dt, GRAVITY)
            z = np.array([s.z for s in samples])
            dz = np.array([s.dz for s in samples])
            fd = (z[2:] - z[:-2]) / (2 * dt)
            return float(np.max(np.abs(fd - dz[1:-1])))

        coarse, fine = max_fd_error(0.02), max_fd_error(0.01)
        assert coarse / fine == pytest.approx(4.0, rel=0.5)

    def test_violent_descent_rejected(self):
        wp = WaypointSet(np.array([[0.0, 0.0, 40.0], [0.0, 0.0, 20.0],
                                   [0.0, 0.0, 0.5]]),
                         np.array([0.0, 1.0, 2.0]))
        curve = solve_trajectory(wp, order=6, n_ctrl=8)
        yp = yaw_profile(0.0, 0.0, 0.0, 2.0)
        with pytest.raises(DegenerateAccelerationError):
            sample_flat_trajectory(curve, yp, 0.01, GRAVITY)
