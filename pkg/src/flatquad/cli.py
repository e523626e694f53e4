"""Command-line surface: scenario files, generation, simulation, comparison.

Scenario files are YAML documents validated against a strict schema (unknown
keys are rejected, angles are radians, every quantity is SI). Outputs are
plain CSV plus JSON metric reports so results diff cleanly and feed any
plotting tool.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .control import GainSet, StrategyKind
from .errors import FlatquadError, ScenarioError
from .flat_map import full_flat_map
from .rigid_body import BodyParams, EnvParams
from .sim import (
    InitialOffset,
    Metrics,
    Scenario,
    TraceRow,
    WindProfile,
    run_scenario,
    solve_trajectory,
)
from .spline import WaypointSet, curve_to_text, sample_flat_trajectory, yaw_profile

TRACE_HEADER = ("t,x,y,z,vx,vy,vz,phi,theta,psi,wx,wy,wz,T,"
                "tau_phi,tau_theta,tau_psi,ref_x,ref_y,ref_z,"
                "ref_phi,ref_theta,ref_psi,wind_x,wind_y,wind_z")

REFERENCE_HEADER = ("t,x,y,z,phi,theta,psi,T,tau_phi,tau_theta,tau_psi")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# scenario schema


def _expect_mapping(node, path: str) -> dict:
    if not isinstance(node, dict):
        raise ScenarioError(f"{path}: expected a mapping")
    return node


def _reject_unknown(node: dict, allowed, path: str) -> None:
    unknown = set(node) - set(allowed)
    if unknown:
        raise ScenarioError(
            f"{path}: unknown key(s) {sorted(unknown)}; allowed: {sorted(allowed)}")


def _get_number(node: dict, key: str, path: str, default=None) -> float:
    if key not in node:
        if default is not None:
            return default
        raise ScenarioError(f"{path}.{key}: required number missing")
    v = node[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(f"{path}.{key}: expected a number, got {v!r}")
    return float(v)


def _get_vector(node: dict, key: str, path: str, n: int, default=None):
    if key not in node:
        if default is not None:
            return np.asarray(default, dtype=float)
        raise ScenarioError(f"{path}.{key}: required list of {n} numbers missing")
    v = node[key]
    if (not isinstance(v, list) or len(v) != n
            or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in v)):
        raise ScenarioError(f"{path}.{key}: expected a list of {n} numbers")
    return np.asarray(v, dtype=float)


def _parse_waypoints(node: dict, duration) -> WaypointSet:
    _reject_unknown(node, {"times", "points"}, "waypoints")
    times = node.get("times")
    points = node.get("points")
    if not isinstance(times, list) or not isinstance(points, list):
        raise ScenarioError("waypoints: 'times' and 'points' lists required")
    if len(times) != len(points):
        raise ScenarioError("waypoints: one time stamp per waypoint required")
    if len(times) < 1:
        raise ScenarioError("waypoints: at least one waypoint required")
    pts = []
    for i, p in enumerate(points):
        if (not isinstance(p, list) or len(p) != 3
                or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in p)):
            raise ScenarioError(f"waypoints.points[{i}]: expected 3 numbers")
        pts.append([float(x) for x in p])
    ts = []
    for i, t in enumerate(times):
        if isinstance(t, bool) or not isinstance(t, (int, float)):
            raise ScenarioError(f"waypoints.times[{i}]: expected a number")
        ts.append(float(t))
    if len(ts) == 1:
        # hover hold: duplicate the single waypoint across the duration
        if duration is None:
            raise ScenarioError(
                "waypoints: a single waypoint needs a top-level 'duration'")
        ts = [ts[0], ts[0] + float(duration)]
        pts = [pts[0], list(pts[0])]
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise ScenarioError("waypoints.times: must be strictly increasing")
    return WaypointSet(np.asarray(pts), np.asarray(ts))


def _parse_gains(node: dict, path: str) -> GainSet:
    node = _expect_mapping(node, path)
    _reject_unknown(node, {"kp", "kd", "ki"}, path)
    return GainSet(
        kp=_get_vector(node, "kp", path, 3),
        kd=_get_vector(node, "kd", path, 3),
        ki=_get_vector(node, "ki", path, 3),
    )


def parse_scenario(doc: dict) -> Scenario:
    """Build a Scenario from a parsed YAML document, validating strictly."""
    doc = _expect_mapping(doc, "scenario")
    allowed = {"name", "waypoints", "spline", "yaw", "body", "env",
               "controllers", "strategy", "wind", "timing", "duration",
               "initial_offset"}
    _reject_unknown(doc, allowed, "scenario")
    for key in ("waypoints", "body", "controllers", "strategy"):
        if key not in doc:
            raise ScenarioError(f"scenario.{key}: required section missing")

    waypoints = _parse_waypoints(_expect_mapping(doc["waypoints"], "waypoints"),
                                 doc.get("duration"))

    spline_node = _expect_mapping(doc.get("spline", {}), "spline")
    _reject_unknown(spline_node, {"order", "control_points"}, "spline")
    order = int(_get_number(spline_node, "order", "spline", 6.0))
    n_ctrl = int(_get_number(spline_node, "control_points", "spline", 12.0))

    yaw_node = _expect_mapping(doc.get("yaw", {}), "yaw")
    _reject_unknown(yaw_node, {"start", "end"}, "yaw")
    yaw_start = _get_number(yaw_node, "start", "yaw", 0.0)
    yaw_end = _get_number(yaw_node, "end", "yaw", 0.0)

    body_node = _expect_mapping(doc["body"], "body")
    _reject_unknown(body_node, {"mass", "arm_length", "thrust_coefficient",
                                "drag_torque_coefficient", "inertia",
                                "rotor_speed_limit", "rotor_accel_limit"}, "body")
    body = BodyParams(
        mass=_get_number(body_node, "mass", "body"),
        arm_length=_get_number(body_node, "arm_length", "body"),
        thrust_coeff=_get_number(body_node, "thrust_coefficient", "body"),
        drag_torque_coeff=_get_number(body_node, "drag_torque_coefficient", "body"),
        inertia=_get_vector(body_node, "inertia", "body", 3),
        rotor_speed_max=_get_number(body_node, "rotor_speed_limit", "body"),
        rotor_accel_max=_get_number(body_node, "rotor_accel_limit", "body"),
    )

    env_node = _expect_mapping(doc.get("env", {}), "env")
    _reject_unknown(env_node, {"gravity", "air_density", "drag_coefficient",
                               "projected_areas"}, "env")
    env = EnvParams(
        gravity=_get_number(env_node, "gravity", "env", 9.81),
        air_density=_get_number(env_node, "air_density", "env", 1.225),
        drag_coeff=_get_number(env_node, "drag_coefficient", "env", 1.0),
        areas=_get_vector(env_node, "projected_areas", "env", 3,
                          (0.01, 0.01, 0.01)),
    )

    ctl_node = _expect_mapping(doc["controllers"], "controllers")
    _reject_unknown(ctl_node, {"torque", "attitude", "integral_limit"},
                    "controllers")
    if "torque" not in ctl_node or "attitude" not in ctl_node:
        raise ScenarioError("controllers: 'torque' and 'attitude' gain sets required")
    torque_gains = _parse_gains(ctl_node["torque"], "controllers.torque")
    attitude_gains = _parse_gains(ctl_node["attitude"], "controllers.attitude")
    integral_limit = _get_number(ctl_node, "integral_limit", "controllers", 10.0)

    strategy_name = doc["strategy"]
    try:
        strategy = StrategyKind(strategy_name)
    except ValueError:
        names = [k.value for k in StrategyKind]
        raise ScenarioError(f"strategy: {strategy_name!r} not one of {names}")

    wind_node = _expect_mapping(doc.get("wind", {"kind": "none"}), "wind")
    _reject_unknown(wind_node, {"kind", "direction", "peak_speed", "t_start",
                                "t_rise", "t_hold", "t_fall", "period"}, "wind")
    kind = wind_node.get("kind", "none")
    if not isinstance(kind, str):
        raise ScenarioError("wind.kind: expected a string")
    try:
        wind = WindProfile(
            kind=kind,
            direction=_get_vector(wind_node, "direction", "wind", 3, (1.0, 0.0, 0.0)),
            peak_speed=_get_number(wind_node, "peak_speed", "wind", 0.0),
            t_start=_get_number(wind_node, "t_start", "wind", 1.0),
            t_rise=_get_number(wind_node, "t_rise", "wind", 2.0),
            t_hold=_get_number(wind_node, "t_hold", "wind", 5.0),
            t_fall=_get_number(wind_node, "t_fall", "wind", 2.0),
            period=_get_number(wind_node, "period", "wind", 10.0),
        )
    except ValueError as err:
        raise ScenarioError(f"wind: {err}") from err

    timing_node = _expect_mapping(doc.get("timing", {}), "timing")
    _reject_unknown(timing_node, {"control_period", "physics_substep"}, "timing")
    control_period = _get_number(timing_node, "control_period", "timing", 0.01)
    substep = _get_number(timing_node, "physics_substep", "timing", 0.001)

    offset_node = _expect_mapping(doc.get("initial_offset", {}), "initial_offset")
    _reject_unknown(offset_node, {"position", "velocity", "angles", "rates"},
                    "initial_offset")
    offset = InitialOffset(
        position=_get_vector(offset_node, "position", "initial_offset", 3, (0, 0, 0)),
        velocity=_get_vector(offset_node, "velocity", "initial_offset", 3, (0, 0, 0)),
        angles=_get_vector(offset_node, "angles", "initial_offset", 3, (0, 0, 0)),
        rates=_get_vector(offset_node, "rates", "initial_offset", 3, (0, 0, 0)),
    )

    name = doc.get("name", "scenario")
    if not isinstance(name, str):
        raise ScenarioError("name: expected a string")

    try:
        return Scenario(
            waypoints=waypoints, body=body, env=env,
            torque_gains=torque_gains, attitude_gains=attitude_gains,
            strategy=strategy, wind=wind, spline_order=order,
            control_point_count=n_ctrl, yaw_start=yaw_start, yaw_end=yaw_end,
            control_period=control_period, physics_substep=substep,
            integral_limit=integral_limit, initial_offset=offset, name=name,
        )
    except ValueError as err:
        raise ScenarioError(str(err)) from err


def default_scenario_path() -> Path:
    """Filesystem path of the bundled waypoint scenario."""
    return Path(resources.files("flatquad") / "scenarios" / "default.yaml")


def load_scenario(path: str | Path) -> tuple[Scenario, str]:
    """Read, validate and hash a scenario file; 'default' loads the bundled one."""
    if str(path) == "default":
        path = default_scenario_path()
    raw = Path(path).read_bytes()
    digest = hashlib.sha256(raw).hexdigest()
    try:
        doc = yaml.safe_load(raw)
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark is not None else ""
        raise ScenarioError(f"{path}: YAML parse error{where}: {err}") from err
    return parse_scenario(doc), digest


# ---------------------------------------------------------------------------
# trace serialization


def trace_to_csv(trace: list[TraceRow]) -> str:
    lines = [TRACE_HEADER]
    for r in trace:
        fields = ([r.time] + list(r.position) + list(r.velocity)
                  + list(r.angles) + list(r.rates) + [r.thrust]
                  + list(r.torque) + list(r.ref_position) + list(r.ref_angles)
                  + list(r.wind))
        lines.append(",".join(_fmt(x) for x in fields))
    return "\n".join(lines) + "\n"


def trace_from_csv(text: str) -> list[TraceRow]:
    lines = text.strip().splitlines()
    if lines[0] != TRACE_HEADER:
        raise ValueError("unexpected trace header")
    rows = []
    for ln in lines[1:]:
        v = [float(x) for x in ln.split(",")]
        rows.append(TraceRow(
            time=v[0], position=np.array(v[1:4]), velocity=np.array(v[4:7]),
            angles=np.array(v[7:10]), rates=np.array(v[10:13]), thrust=v[13],
            torque=np.array(v[14:17]), ref_position=np.array(v[17:20]),
            ref_angles=np.array(v[20:23]), wind=np.array(v[23:26]),
            rotor_speeds=np.full(4, math.nan)))
    return rows


def _metrics_dict(m: Metrics) -> dict:
    return {"iae": m.iae, "max_position_error": m.max_position_error,
            "max_tilt": m.max_tilt, "saturation_count": m.saturation_count}


# ---------------------------------------------------------------------------
# commands


def cmd_generate(scenario_path: str, out_dir: str | Path, dt: float | None = None) -> int:
    """Write the optimized curve, the yaw schedule and dense flat references."""
    scenario, digest = load_scenario(scenario_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    curve = solve_trajectory(scenario.waypoints, scenario.spline_order,
                             scenario.control_point_count)
    yaw = yaw_profile(scenario.yaw_start, scenario.yaw_end,
                      scenario.waypoints.t_start, scenario.waypoints.t_end)
    (out / "curve.txt").write_text(curve_to_text(curve))
    coeffs = " ".join(_fmt(c) for c in yaw.coefficients)
    (out / "yaw.txt").write_text(
        f"yaw-half-tangent-poly v1\nt_start {_fmt(yaw.t_start)}\n"
        f"coefficients {coeffs}\n")

    step = dt if dt is not None else scenario.control_period
    samples = sample_flat_trajectory(curve, yaw, step, scenario.env.gravity)
    lines = [REFERENCE_HEADER]
    for s in samples:
        ref = full_flat_map(s, scenario.body)
        fields = ([ref.time] + list(ref.position) + list(ref.angles)
                  + [ref.thrust] + list(ref.torque))
        lines.append(",".join(_fmt(x) for x in fields))
    (out / "flat_reference.csv").write_text("\n".join(lines) + "\n")
    print(f"generate: {scenario.name} ({digest[:12]}) -> {out} "
          f"({len(samples)} rows)")
    return 0


def cmd_simulate(scenario_path: str, out_dir: str | Path,
                 dt: float | None = None) -> int:
    """Roll out the scenario; write trace.csv and metrics.json."""
    scenario, digest = load_scenario(scenario_path)
    if dt is not None:
        scenario = replace(scenario, control_period=dt)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace, metrics = run_scenario(scenario)
    (out / "trace.csv").write_text(trace_to_csv(trace))
    report = {
        "scenario": scenario.name,
        "digest": digest,
        "version": __version__,
        "strategy": scenario.strategy.value,
        "metrics": _metrics_dict(metrics),
    }
    (out / "metrics.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"simulate: {scenario.name} [{scenario.strategy.value}] "
          f"IAE={metrics.iae:.6g} max_err={metrics.max_position_error:.6g} m "
          f"saturations={metrics.saturation_count}")
    return 0


DEFAULT_GUST = WindProfile(kind="ramp_gust",
                           direction=(1.0 / math.sqrt(2.0), 1.0 / math.sqrt(2.0), 0.0),
                           peak_speed=25.0 / 3.6,
                           t_start=0.5, t_rise=1.5, t_hold=6.5, t_fall=1.0)


def cmd_compare(scenario_path: str, out_dir: str | Path | None = None) -> int:
    """Run every strategy with and without wind; print the IAE grid.

    The wind column uses the scenario's wind profile, or a 25 km/h north-east
    ramp gust when the file says 'none'. Cell failures are reported without
    stopping the remaining cells.
    """
    scenario, digest = load_scenario(scenario_path)
    if scenario.wind.kind != "none":
        wind = scenario.wind
    elif scenario.wind.peak_speed > 0.0:
        # windless file that still describes a gust: use it for the wind column
        wind = replace(scenario.wind, kind="ramp_gust")
    else:
        wind = DEFAULT_GUST
    cases = {"no_wind": WindProfile.none(), "wind": wind}
    cells: dict[str, dict[str, dict]] = {}
    for strategy in StrategyKind:
        cells[strategy.value] = {}
        for label, profile in cases.items():
            cell = replace(scenario, strategy=strategy, wind=profile)
            try:
                _, metrics = run_scenario(cell)
                cells[strategy.value][label] = _metrics_dict(metrics)
            except FlatquadError as err:
                cells[strategy.value][label] = {"error": str(err)}

    width = max(len(k.value) for k in StrategyKind) + 2
    print(f"{'strategy':<{width}}{'IAE no wind':>14}{'IAE wind':>14}")
    for strategy in StrategyKind:
        row = cells[strategy.value]

        def cell_str(c):
            return f"{c['iae']:.4f}" if "iae" in c else "FAILED"

        print(f"{strategy.value:<{width}}{cell_str(row['no_wind']):>14}"
              f"{cell_str(row['wind']):>14}")

    report = {"scenario": scenario.name, "digest": digest,
              "version": __version__, "cells": cells}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "compare.json").write_text(
            json.dumps(report, indent=2, sort_keys=True) + "\n")
    failed = any("error" in c for row in cells.values() for c in row.values())
    return 1 if failed else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="flatquad",
        description="Flatness-based quadcopter trajectory generation and "
                    "tracking simulation")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="optimize and dump the flat trajectory")
    p_gen.add_argument("scenario", help="scenario YAML path, or 'default'")
    p_gen.add_argument("--out", default="out", help="output directory")
    p_gen.add_argument("--dt", type=float, default=None,
                       help="reference sampling step (s)")

    p_sim = sub.add_parser("simulate", help="closed-loop rollout of one scenario")
    p_sim.add_argument("scenario", help="scenario YAML path, or 'default'")
    p_sim.add_argument("--out", default="out", help="output directory")
    p_sim.add_argument("--dt", type=float, default=None,
                       help="override the control period (s)")

    p_cmp = sub.add_parser("compare", help="strategy x wind IAE grid")
    p_cmp.add_argument("scenario", help="scenario YAML path, or 'default'")
    p_cmp.add_argument("--out", default=None, help="optional report directory")

    p_cmp.add_argument("--seed", type=int, default=None, help=argparse.SUPPRESS)
    p_sim.add_argument("--seed", type=int, default=None, help=argparse.SUPPRESS)
    p_gen.add_argument("--seed", type=int, default=None, help=argparse.SUPPRESS)

    args = parser.parse_args(argv)
    try:
        if args.command == "generate":
            return cmd_generate(args.scenario, args.out, args.dt)
        if args.command == "simulate":
            return cmd_simulate(args.scenario, args.out, args.dt)
        return cmd_compare(args.scenario, args.out)
    except ScenarioError as err:
        print(f"scenario error: {err}", file=sys.stderr)
        return 2
    except (FlatquadError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


def run() -> None:
    raise SystemExit(main())
