"""Clamped B-spline trajectories through waypoints.

The flat-output position channels are represented as a B-spline curve of
order ``d`` (polynomial degree ``d - 1``) over a clamped knot vector. The
control points are chosen to minimize the integral of squared velocity, a
quadratic surrogate for trajectory length whose constrained minimizer is
found from a single dense KKT solve, subject to exact interpolation of every
waypoint at its time stamp. The yaw channel is decoupled: the half-angle
tangent follows a degree-9 rest-to-rest polynomial so that its first four
derivatives vanish at both ends.

Basis conventions follow the classical Cox-de Boor recursion: order 1 basis
functions are the span indicators, order d functions have degree d - 1, and
0/0 is read as 0 wherever repeated knots shrink a span to nothing. The basis
is evaluated with the left-limit convention at the right end of the domain so
the clamped curve interpolates its last control point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    InfeasibleConstraintsError,
    OrderTooHighError,
    SingularKKTError,
)
from .flat_map import FlatSample

CONSTRAINT_TOL = 1e-9


@dataclass(frozen=True)
class KnotVector:
    """Non-decreasing knot sequence plus the spline order it serves."""

    knots: np.ndarray
    order: int

    def __post_init__(self):
        object.__setattr__(self, "knots", np.asarray(self.knots, dtype=float))
        if self.knots.ndim != 1 or len(self.knots) < 2 * self.order:
            raise ValueError("need at least 2 * order knots")
        if self.order < 2:
            raise ValueError("order must be at least 2")
        if np.any(np.diff(self.knots) < 0.0):
            raise ValueError("knots must be non-decreasing")

    @property
    def n_basis(self) -> int:
        """Number of order-``order`` basis functions (= control points)."""
        return len(self.knots) - self.order

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    @property
    def is_clamped(self) -> bool:
        d = self.order
        return bool(np.all(self.knots[:d] == self.knots[0])
                    and np.all(self.knots[-d:] == self.knots[-1]))

    @classmethod
    def clamped_uniform(cls, t_start: float, t_end: float, n_ctrl: int,
                        order: int) -> "KnotVector":
        """First and last ``order`` knots pinned to the ends, interior knots
        equally spaced strictly between them."""
        if t_end <= t_start:
            raise ValueError("t_end must exceed t_start")
        if n_ctrl < order:
            raise ValueError("need at least `order` control points")
        n_interior = n_ctrl - order
        interior = np.linspace(t_start, t_end, n_interior + 2)[1:-1]
        knots = np.concatenate([
            np.full(order, t_start), interior, np.full(order, t_end)])
        return cls(knots, order)


def _order1_row(kv: KnotVector, t: float) -> np.ndarray:
    """Span indicators, closed on the right at the domain end."""
    knots = kv.knots
    row = np.zeros(len(knots) - 1)
    t_end = knots[-1]
    for i in range(len(row)):
        if knots[i] <= t < knots[i + 1]:
            row[i] = 1.0
        elif t == t_end and knots[i] < knots[i + 1] == t_end:
            row[i] = 1.0
    return row


def _basis_row(kv: KnotVector, order: int, t: float, deriv: int = 0) -> np.ndarray:
    """All order-``order`` basis values (or a derivative) at one time.

    Values are built bottom-up through the Cox-de Boor recursion; derivatives
    lower the starting order and lift back up through the standard derivative
    recursion, one differentiation per order step.
    """
    if deriv >= order:
        raise OrderTooHighError(
            f"derivative order {deriv} needs spline order > {deriv}")
    knots = kv.knots
    row = _order1_row(kv, t)
    for k in range(2, order - deriv + 1):
        nxt = np.zeros(len(knots) - k)
        for i in range(len(nxt)):
            left = knots[i + k - 1] - knots[i]
            right = knots[i + k] - knots[i + 1]
            acc = 0.0
            if left > 0.0:
                acc += (t - knots[i]) / left * row[i]
            if right > 0.0:
                acc += (knots[i + k] - t) / right * row[i + 1]
            nxt[i] = acc
        row = nxt
    for k in range(order - deriv + 1, order + 1):
        nxt = np.zeros(len(knots) - k)
        for i in range(len(nxt)):
            left = knots[i + k - 1] - knots[i]
            right = knots[i + k] - knots[i + 1]
            acc = 0.0
            if left > 0.0:
                acc += row[i] / left
            if right > 0.0:
                acc -= row[i + 1] / right
            nxt[i] = (k - 1) * acc
        row = nxt
    return row


def _basis_rows_batch(kv: KnotVector, order: int, ts: np.ndarray,
                      deriv: int = 0) -> np.ndarray:
    """Vectorized ``_basis_row`` over many times; returns (len(ts), n_basis).

    Same recursion as the scalar path, broadcast across the time axis; dense
    sampling would otherwise dominate the runtime.
    """
    if deriv >= order:
        raise OrderTooHighError(
            f"derivative order {deriv} needs spline order > {deriv}")
    knots = kv.knots
    ts = np.asarray(ts, dtype=float)
    t_end = knots[-1]
    cols = len(knots) - 1
    rows = (knots[:cols][None, :] <= ts[:, None]) & (ts[:, None] < knots[1:][None, :])
    closure = (knots[:cols] < knots[1:]) & (knots[1:] == t_end)
    rows = rows | (closure[None, :] & (ts[:, None] == t_end))
    rows = rows.astype(float)
    for k in range(2, order - deriv + 1):
        n = len(knots) - k
        left = knots[k - 1:k - 1 + n] - knots[:n]
        right = knots[k:k + n] - knots[1:1 + n]
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(left > 0.0, (ts[:, None] - knots[:n][None, :]) / left, 0.0)
            b = np.where(right > 0.0, (knots[k:k + n][None, :] - ts[:, None]) / right, 0.0)
        rows = a * rows[:, :n] + b * rows[:, 1:n + 1]
    for k in range(order - deriv + 1, order + 1):
        n = len(knots) - k
        left = knots[k - 1:k - 1 + n] - knots[:n]
        right = knots[k:k + n] - knots[1:1 + n]
        inv_left = np.where(left > 0.0, np.divide(1.0, left, where=left > 0.0), 0.0)
        inv_right = np.where(right > 0.0, np.divide(1.0, right, where=right > 0.0), 0.0)
        rows = (k - 1) * (rows[:, :n] * inv_left - rows[:, 1:n + 1] * inv_right)
    return rows


def basis_eval(kv: KnotVector, i: int, order: int, t: float) -> float:
    """Value of the i-th order-``order`` basis function at ``t``."""
    n_basis = len(kv.knots) - order
    if not 0 <= i < n_basis:
        raise IndexError(f"basis index {i} out of range [0, {n_basis})")
    return float(_basis_row(kv, order, t)[i])


def basis_derivative(kv: KnotVector, i: int, order: int, t: float,
                     deriv: int) -> float:
    """``deriv``-th derivative of the i-th basis function at ``t``."""
    n_basis = len(kv.knots) - order
    if not 0 <= i < n_basis:
        raise IndexError(f"basis index {i} out of range [0, {n_basis})")
    return float(_basis_row(kv, order, t, deriv)[i])


@dataclass(frozen=True)
class BSplineCurve:
    """Curve in R^dim as a basis-weighted sum of control points."""

    kv: KnotVector
    control_points: np.ndarray   # (n_ctrl, dim)

    def __post_init__(self):
        pts = np.asarray(self.control_points, dtype=float)
        if pts.ndim != 2:
            raise ValueError("control points must be a 2-D array")
        object.__setattr__(self, "control_points", pts)
        if len(pts) != self.kv.n_basis:
            raise ValueError(
                f"{self.kv.n_basis} control points required, got {len(pts)}")
        if not self.kv.is_clamped:
            raise ValueError("curve requires a clamped knot vector")

    @property
    def domain(self) -> tuple[float, float]:
        return self.kv.domain

    def eval(self, t: float, deriv: int = 0) -> np.ndarray:
        return curve_eval(self, t, deriv)


def curve_eval(curve: BSplineCurve, t: float, deriv: int = 0) -> np.ndarray:
    """Curve value or derivative at ``t``; ``deriv`` must stay below the order."""
    t0, t1 = curve.domain
    if not (t0 - 1e-12 <= t <= t1 + 1e-12):
        raise ValueError(f"t={t} outside the curve domain [{t0}, {t1}]")
    t = min(max(t, t0), t1)
    row = _basis_row(curve.kv, curve.kv.order, t, deriv)
    return row @ curve.control_points


@dataclass(frozen=True)
class WaypointSet:
    """Positions to interpolate and their strictly increasing time stamps."""

    points: np.ndarray   # (N+1, 3)
    times: np.ndarray    # (N+1,)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        ts = np.asarray(self.times, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("waypoints must be an (N+1, 3) array")
        if ts.shape != (len(pts),):
            raise ValueError("one time stamp per waypoint required")
        if len(pts) < 2:
            raise ValueError("need at least two waypoints")
        if np.any(np.diff(ts) <= 0.0):
            raise ValueError("time stamps must be strictly increasing")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "times", ts)

    @property
    def t_start(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])


def gram_matrix(kv: KnotVector, deriv: int = 1,
                n_nodes: int | None = None) -> np.ndarray:
    """Gram matrix of basis-derivative products, span-by-span Gauss-Legendre.

    ``order + 1`` nodes per span integrate the polynomial integrand exactly;
    ``n_nodes`` overrides the count (useful for quadrature sanity checks).
    """
    order = kv.order
    n = kv.n_basis
    nodes, weights = np.polynomial.legendre.leggauss(
        n_nodes if n_nodes is not None else order + 1)
    gram = np.zeros((n, n))
    knots = kv.knots
    for j in range(len(knots) - 1):
        a, b = knots[j], knots[j + 1]
        if b <= a:
            continue
        half = 0.5 * (b - a)
        mid = 0.5 * (a + b)
        for node, wq in zip(nodes, weights):
            row = _basis_row(kv, order, mid + half * node, deriv)
            gram += (wq * half) * np.outer(row, row)
    return gram


def solve_trajectory(waypoints: WaypointSet, order: int = 6,
                     n_ctrl: int = 12) -> BSplineCurve:
    """Control points minimizing integrated squared velocity through waypoints.

    Solved per coordinate channel as one dense KKT system: the Gram matrix of
    first-derivative products is the quadratic cost, the interpolation rows
    are the equality constraints. Raises InfeasibleConstraintsError when the
    constraint matrix is rank deficient and SingularKKTError when the solve
    fails or leaves a noticeable constraint residual.
    """
    n_way = len(waypoints.times)
    if order < 5:
        raise ValueError("order below 5 cannot carry fourth derivatives")
    if n_ctrl < n_way:
        raise InfeasibleConstraintsError(
            f"{n_way} waypoints need at least {n_way} control points, got {n_ctrl}")
    kv = KnotVector.clamped_uniform(waypoints.t_start, waypoints.t_end,
                                    n_ctrl, order)
    constraints = np.array([_basis_row(kv, order, t) for t in waypoints.times])
    rank = np.linalg.matrix_rank(constraints)
    if rank < n_way:
        raise InfeasibleConstraintsError(
            f"constraint rank {rank} below waypoint count {n_way}")

    gram = gram_matrix(kv)
    kkt = np.zeros((n_ctrl + n_way, n_ctrl + n_way))
    kkt[:n_ctrl, :n_ctrl] = gram
    kkt[:n_ctrl, n_ctrl:] = constraints.T
    kkt[n_ctrl:, :n_ctrl] = constraints
    rhs = np.zeros((n_ctrl + n_way, 3))
    rhs[n_ctrl:] = waypoints.points
    try:
        solution = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError as err:
        raise SingularKKTError(f"optimality system is singular: {err}") from err
    ctrl = solution[:n_ctrl]
    residual = float(np.max(np.abs(constraints @ ctrl - waypoints.points)))
    if residual > CONSTRAINT_TOL:
        raise SingularKKTError(
            f"waypoint residual {residual:.3e} above {CONSTRAINT_TOL:.0e}")
    return BSplineCurve(kv, ctrl)


def curve_to_text(curve: BSplineCurve) -> str:
    """Plain-text dump (order, knots, control points) for regression goldens."""
    lines = [
        "bspline-curve v1",
        f"order {curve.kv.order}",
        "knots " + " ".join(format(k, ".17g") for k in curve.kv.knots),
        f"points {len(curve.control_points)} {curve.control_points.shape[1]}",
    ]
    for p in curve.control_points:
        lines.append(" ".join(format(x, ".17g") for x in p))
    return "\n".join(lines) + "\n"


def curve_from_text(text: str) -> BSplineCurve:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != "bspline-curve v1":
        raise ValueError("not a curve dump")
    order = int(lines[1].split()[1])
    knots = np.array([float(x) for x in lines[2].split()[1:]])
    count, dim = (int(x) for x in lines[3].split()[1:])
    pts = np.array([[float(x) for x in ln.split()] for ln in lines[4:4 + count]])
    if pts.shape != (count, dim):
        raise ValueError("control point block malformed")
    return BSplineCurve(KnotVector(knots, order), pts)


@dataclass(frozen=True)
class YawProfile:
    """Half-angle-tangent yaw channel as a rest-to-rest polynomial.

    The degree-9 shape function has value 0/1 and vanishing derivatives one
    through four at both ends, so the yaw channel never introduces torque
    transients at the trajectory boundaries.
    """

    start_value: float
    end_value: float
    t_start: float
    duration: float

    _SHAPE = None  # lazily solved shape-polynomial derivative stack

    @classmethod
    def _shape(cls) -> list[np.polynomial.Polynomial]:
        if YawProfile._SHAPE is None:
            # leading coefficients of s(x) = sum c_j x^j, j = 5..9, from the
            # five boundary conditions at x = 1 (those at x = 0 zero c_0..c_4)
            powers = np.arange(5, 10)
            rows = [powers * 0 + 1.0]
            for r in range(1, 5):
                rows.append(rows[-1] * (powers - (r - 1)))
            system = np.array(rows, dtype=float)
            target = np.array([1.0, 0.0, 0.0, 0.0, 0.0])
            lead = np.linalg.solve(system, target)
            poly = np.polynomial.Polynomial(np.concatenate([np.zeros(5), lead]))
            stack = [poly]
            for _ in range(4):
                stack.append(stack[-1].deriv())
            YawProfile._SHAPE = stack
        return YawProfile._SHAPE

    def eval(self, t: float, deriv: int = 0) -> float:
        """Value or time derivative (through order 4) of tan(yaw/2)."""
        if not 0 <= deriv <= 4:
            raise ValueError("derivative order must be between 0 and 4")
        span = self.end_value - self.start_value
        if span == 0.0:
            return self.start_value if deriv == 0 else 0.0
        x = (t - self.t_start) / self.duration
        x = min(max(x, 0.0), 1.0)
        value = span * float(self._shape()[deriv](x)) / self.duration ** deriv
        if deriv == 0:
            value += self.start_value
        return value

    def eval_many(self, ts, deriv: int = 0) -> np.ndarray:
        """Vectorized ``eval`` over an array of times."""
        ts = np.asarray(ts, dtype=float)
        span = self.end_value - self.start_value
        if span == 0.0:
            fill = self.start_value if deriv == 0 else 0.0
            return np.full(ts.shape, fill)
        x = np.clip((ts - self.t_start) / self.duration, 0.0, 1.0)
        values = span * self._shape()[deriv](x) / self.duration ** deriv
        if deriv == 0:
            values = values + self.start_value
        return values

    @property
    def coefficients(self) -> np.ndarray:
        """Coefficients of tan(yaw/2) as a polynomial in t - t_start."""
        span = self.end_value - self.start_value
        shape = self._shape()[0].coef
        scale = span / self.duration ** np.arange(len(shape))
        coef = shape * scale
        coef = coef.copy()
        coef[0] += self.start_value
        return coef


def yaw_profile(yaw_start: float, yaw_end: float, t_start: float,
                t_end: float) -> YawProfile:
    """Smooth yaw schedule between two heading angles (each within +/-pi)."""
    if not (abs(yaw_start) < math.pi and abs(yaw_end) < math.pi):
        raise ValueError("yaw endpoints must lie strictly inside (-pi, pi)")
    if t_end <= t_start:
        raise ValueError("t_end must exceed t_start")
    return YawProfile(
        start_value=math.tan(0.5 * yaw_start),
        end_value=math.tan(0.5 * yaw_end),
        t_start=t_start,
        duration=t_end - t_start,
    )


def flat_samples_at(curve: BSplineCurve, yaw: YawProfile, times,
                    gravity: float) -> list[FlatSample]:
    """Flat samples (derivatives through order four) at arbitrary times."""
    order = curve.kv.order
    ts = np.asarray(times, dtype=float)
    stacks = np.zeros((5, len(ts), 4))
    for r in range(5):
        rows = _basis_rows_batch(curve.kv, order, ts, r)
        stacks[r, :, :3] = rows @ curve.control_points
        stacks[r, :, 3] = yaw.eval_many(ts, r)
    return [FlatSample(time=float(t), z=stacks[0, j], dz=stacks[1, j],
                       d2z=stacks[2, j], d3z=stacks[3, j], d4z=stacks[4, j],
                       gravity=gravity)
            for j, t in enumerate(ts)]


def sample_flat_trajectory(curve: BSplineCurve, yaw: YawProfile, dt: float,
                           gravity: float) -> list[FlatSample]:
    """Dense flat samples from the start to the end of the curve domain.

    Sampling is at t_start, t_start + dt, ... through t_end; a sample whose
    vertical acceleration drops to free fall or below raises
    DegenerateAccelerationError.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    t0, t1 = curve.domain
    count = int(round((t1 - t0) / dt))
    times = t0 + dt * np.arange(count + 1)
    if abs(times[-1] - t1) > 1e-9:
        times = np.append(times[times < t1 - 1e-12], t1)
    else:
        times[-1] = t1
    return flat_samples_at(curve, yaw, times, gravity)
