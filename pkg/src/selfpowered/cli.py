"""Command-line front end.

Exit codes: 0 self-powered (or plain success), 1 usage or parse error,
2 self-powered condition violated, 3 simulation diverged, 4 infeasible
bound problem.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .control import (
    ConfigurationError,
    PidGains,
    duty_cycle_report,
    simulate_closed_loop,
)
from .dynamics import DEFAULT_AIR_DENSITY, DivergenceError
from .ouq import BoundedInput, InfeasibleError, feasible_region, gain_region_map, ouq_lower_bound, ouq_upper_bound
from .powertrain import (
    DEFAULT_CELL,
    PvArrayConfig,
    PvCellParams,
    generated_power,
    maximum_power_point,
    pv_iv_curve,
)
from .scenario import ScenarioError, build_control, build_ouq, load_scenario
from .solar_speed import (
    CHART_DRAG,
    HullGeometry,
    SpeedQuery,
    accel_frontier,
    chart_speed,
    solar_speed,
    speed_table,
    terminal_speed,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOT_SELF_POWERED = 2
EXIT_DIVERGED = 3
EXIT_INFEASIBLE = 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "none"
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    return f"{float(x):.17g}"


def _write_csv(path: Path, header: str, rows: np.ndarray) -> None:
    np.savetxt(path, rows, fmt="%.17g", delimiter=",", header=header, comments="")


class Run:
    """Tracks outputs and writes the manifest at the end of a command."""

    def __init__(self, args, command: str, scenario=None, extra=None):
        self.out_dir = Path(args.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.seed = args.seed
        self.start = time.perf_counter()
        self.outputs: list[str] = []
        if scenario is not None:
            self.digest = scenario.digest
        else:
            params = {k: v for k, v in (extra or {}).items() if not callable(v)}
            canon = json.dumps(params, sort_keys=True)
            self.digest = hashlib.sha256(canon.encode()).hexdigest()
        self.manifest_name = (scenario.output_name("manifest", "manifest.json") if scenario is not None
                              else "manifest.json")
        self.overrides = {}

    def path(self, name: str) -> Path:
        p = self.out_dir / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.outputs.append(name)
        return p

    def finish(self, exit_code: int) -> int:
        manifest = {
            "tool": "selfpowered",
            "version": __version__,
            "command": self.command,
            "scenario_hash": self.digest,
            "seed": self.seed,
            "overrides": self.overrides,
            "wall_clock_s": round(time.perf_counter() - self.start, 6),
            "outputs": self.outputs,
            "exit_code": exit_code,
        }
        (self.out_dir / self.manifest_name).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return exit_code


# ---------------------------------------------------------------------------
# commands


def _geometry(args) -> HullGeometry:
    need = ("a", "b", "L") if args.shape == "cuboid" else ("b", "D", "L")
    missing = [k for k in need if getattr(args, k) is None]
    if missing:
        raise UsageError(f"{args.shape} needs --{' --'.join(missing)}")
    if args.shape == "cuboid":
        width, height = args.a, args.b
    else:
        width, height = args.b, args.D
    try:
        return HullGeometry(args.shape, width, height, args.L, args.cd_max, args.cd_actual)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_solar_speed(args) -> int:
    run = Run(args, "solar-speed", extra=vars(args))
    if args.table:
        etas = args.eta_list
        if not etas or any(not 0 < e < 1 for e in etas):
            raise UsageError("--eta-list values must lie in (0, 1)")
        rows = speed_table(args.shape, etas, (args.ratio_min, args.ratio_max), args.samples, args.rho)
        _write_csv(run.path("speed_table.csv"), "aspect_ratio,efficiency,speed_mps", rows)
        print(f"table_rows={len(rows)}")
    if args.eta is None:
        if not args.table:
            raise UsageError("--eta is required unless --table is given")
        return run.finish(EXIT_OK)
    if not 0 < args.eta < 1:
        raise UsageError("--eta must lie in (0, 1)")
    if args.ratio is not None:
        if args.ratio <= 0:
            raise UsageError("--ratio must be positive")
        cd = args.cd_max if args.cd_max is not None else CHART_DRAG[args.shape]
        v = float(chart_speed(args.ratio, args.eta, cd, args.rho, args.irradiance))
    else:
        geom = _geometry(args)
        try:
            query = SpeedQuery(geom, args.eta, args.pv_area, args.rho, args.irradiance)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        v = solar_speed(query)
    print(f"v_solar_mps={_fmt(v)}")
    return run.finish(EXIT_OK)


def cmd_pv_curve(args) -> int:
    run = Run(args, "pv-curve", extra=vars(args))
    if args.samples < 2:
        raise UsageError("--samples must be at least 2")
    try:
        cell = PvCellParams(args.isc, args.i0, args.rs, args.rsh, args.ideality, args.temperature)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    curve = pv_iv_curve(cell, samples=args.samples)
    _write_csv(run.path("pv_curve.csv"), "voltage_V,current_A,power_W", curve)
    v, i, p = maximum_power_point(cell)
    print(f"mpp_V={_fmt(v)}\nmpp_A={_fmt(i)}\nmpp_W={_fmt(p)}")
    print(f"sampled_max_W={_fmt(curve[:, 2].max())}")
    return run.finish(EXIT_OK)


def cmd_accel_frontier(args) -> int:
    run = Run(args, "accel-frontier", extra=vars(args))
    if args.samples < 2:
        raise UsageError("--samples must be at least 2")
    area = args.area if args.area is not None else math.pi * args.radius**2
    pv_area = args.pv_area if args.pv_area is not None else area
    if not 0 < args.eta < 1:
        raise UsageError("--eta must lie in (0, 1)")
    if min(area, pv_area, args.mass, args.cd) <= 0:
        raise UsageError("mass, drag coefficient and areas must be positive")
    pg = generated_power(PvArrayConfig(pv_area, args.eta))
    v_top = terminal_speed(args.cd, area, pg, args.rho)
    v_lo = args.v_min if args.v_min is not None else v_top / args.samples
    if not 0 < v_lo < v_top:
        raise UsageError(f"--v-min must lie in (0, {v_top:.6g})")
    v = np.linspace(v_lo, v_top, args.samples)
    a = accel_frontier(v, args.mass, args.cd, area, pg, args.rho)
    _write_csv(run.path("accel_frontier.csv"), "velocity_mps,accel_mps2", np.column_stack([v, a]))
    print(f"P_g_W={_fmt(pg)}\nv_solar_mps={_fmt(v_top)}")
    return run.finish(EXIT_OK)


def _override_gains(args, control, run: Run):
    g = control.gains_force
    changes = {k: getattr(args, k) for k in ("kp", "ki", "kd") if getattr(args, k, None) is not None}
    if not changes:
        return control
    run.overrides.update(changes)
    try:
        g = PidGains(changes.get("kp", g.kp), changes.get("ki", g.ki), changes.get("kd", g.kd), g.derivative_filter)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return replace(control, gains_force=g)


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    control = build_control(scenario)
    run = Run(args, "simulate", scenario)
    control = _override_gains(args, control, run)
    try:
        result = simulate_closed_loop(control)
    except DivergenceError as exc:
        print(f"diverged_step={exc.step}", file=sys.stderr)
        print(str(exc), file=sys.stderr)
        return run.finish(EXIT_DIVERGED)
    result.to_csv(run.path(scenario.output_name("series_csv", "series.csv")))
    lines = [f"samples={len(result)}", f"max_Pnon={_fmt(result.max_pnon)}"]
    for channel, m in result.metrics.items():
        for key, value in m.as_dict().items():
            lines.append(f"{channel}.{key}={_fmt(value)}")
    run.path(scenario.output_name("metrics", "metrics.txt")).write_text("\n".join(lines) + "\n")
    report = duty_cycle_report(result, control.segments)
    duty_lines = []
    for k, d in enumerate(report):
        duty_lines.append(
            f"duty[{k}] t_start={_fmt(d.t_start)} t_end={_fmt(d.t_end)} max_Pnon={_fmt(d.max_pnon)} "
            f"mean_Pnon={_fmt(d.mean_pnon)} self_powered={_fmt(d.self_powered)}"
        )
    run.path(scenario.output_name("duty_report", "duty_cycles.txt")).write_text("\n".join(duty_lines) + "\n")
    print("\n".join(lines + duty_lines))
    ok = all(d.self_powered for d in report)
    print(f"self_powered={_fmt(ok)}")
    return run.finish(EXIT_OK if ok else EXIT_NOT_SELF_POWERED)


def cmd_gain_map(args) -> int:
    scenario = load_scenario(args.scenario)
    control = build_control(scenario)
    run = Run(args, "gain-map", scenario)
    gm = scenario.section("gain_map")

    def pick(flag, key, default):
        value = getattr(args, flag)
        if value is not None:
            run.overrides[flag] = value
            return value
        return gm.get(key, default)

    kp_lo, kp_hi = pick("kp_min", "kp_min", 0.0), pick("kp_max", "kp_max", 1000.0)
    kd_lo, kd_hi = pick("kd_min", "kd_min", 0.0), pick("kd_max", "kd_max", 1000.0)
    nkp, nkd = pick("kp_points", "kp_points", 41), pick("kd_points", "kd_points", 41)
    channel = gm.get("channel", "x")
    if channel not in ("x", "z"):
        raise ScenarioError("gain_map.channel must be 'x' or 'z'")
    try:
        gmap = gain_region_map(control, BoundedInput("kp", kp_lo, kp_hi), BoundedInput("kd", kd_lo, kd_hi),
                               (nkp, nkd), channel)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc
    mask = None
    if args.feasible:
        region = feasible_region(gmap, args.pnon_max, args.overshoot_max, args.v_min, args.peak_time_max)
        mask = region.mask
        print("\n".join(region.summary()))
    gmap.to_csv(run.path(scenario.output_name("gain_map_csv", "gain_map.csv")), mask)
    print(f"cells={gmap.pnon_max.size}\ndiverged={int(gmap.diverged.sum())}")
    return run.finish(EXIT_OK)


def cmd_ouq_bounds(args) -> int:
    scenario = load_scenario(args.scenario)
    settings = build_ouq(scenario)
    run = Run(args, "ouq-bounds", scenario)
    budget = dict(starts=settings.starts, sweeps=settings.sweeps, seed=args.seed, grid=settings.grid,
                  random_candidates=settings.random_candidates, refinements=settings.refinements)
    adm = settings.admissible
    try:
        upper = ouq_upper_bound(adm, **budget)
        lower = ouq_lower_bound(adm, **budget)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return run.finish(EXIT_INFEASIBLE)
    lines = [
        f"seed={args.seed}",
        f"starts={settings.starts}",
        f"sweeps={settings.sweeps}",
        f"mean_constraint={_fmt(adm.mean_constraint)}",
        f"threshold={_fmt(adm.threshold)}",
        *lower.report(adm.inputs),
        *upper.report(adm.inputs),
        f"response_evaluations={adm.evaluations}",
    ]
    text = "\n".join(lines) + "\n"
    run.path(scenario.output_name("ouq_report", "ouq_report.txt")).write_text(text)
    sys.stdout.write(text)
    return run.finish(EXIT_OK)


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="RNG seed (default 0)")
    common.add_argument("--out-dir", default=argparse.SUPPRESS, help="output directory (default ./out)")
    common.add_argument("--format", choices=["csv"], default=argparse.SUPPRESS)

    parser = _Parser(prog="selfpowered", description="Self-powered flight analysis tools.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-dir", default="out")
    parser.add_argument("--format", choices=["csv"], default="csv")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solar-speed", parents=[common], help="steady solar-powered airspeed")
    p.add_argument("--shape", choices=sorted(CHART_DRAG), default="cuboid")
    for dim in ("a", "b", "D", "L"):
        p.add_argument(f"--{dim}", type=float, help=f"hull dimension {dim} [m]")
    p.add_argument("--eta", type=float, help="overall PV efficiency in (0, 1)")
    p.add_argument("--ratio", type=float, help="use an aspect ratio directly (possibly updated)")
    p.add_argument("--pv-area", type=float, help="PV area [m^2]; default full top surface")
    p.add_argument("--cd-max", type=float)
    p.add_argument("--cd-actual", type=float)
    p.add_argument("--rho", type=float, default=DEFAULT_AIR_DENSITY)
    p.add_argument("--irradiance", type=float, default=1000.0)
    p.add_argument("--table", action="store_true", help="write speed_table.csv")
    p.add_argument("--eta-list", type=float, nargs="+", default=[0.05, 0.1, 0.15, 0.2, 0.25, 0.3])
    p.add_argument("--ratio-min", type=float, default=0.5)
    p.add_argument("--ratio-max", type=float, default=10.0)
    p.add_argument("--samples", type=int, default=96)
    p.set_defaults(func=cmd_solar_speed)

    p = sub.add_parser("simulate", parents=[common], help="closed-loop run of a scenario file")
    p.add_argument("scenario")
    p.add_argument("--kp", type=float, help="override force-loop kp")
    p.add_argument("--ki", type=float, help="override force-loop ki")
    p.add_argument("--kd", type=float, help="override force-loop kd")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gain-map", parents=[common], help="kp/kd sweep of a scenario file")
    p.add_argument("scenario")
    for flag in ("kp-min", "kp-max", "kd-min", "kd-max"):
        p.add_argument(f"--{flag}", type=float)
    p.add_argument("--kp-points", type=int)
    p.add_argument("--kd-points", type=int)
    p.add_argument("--feasible", action="store_true", help="add a feasibility mask column")
    p.add_argument("--pnon-max", type=float, default=1.0)
    p.add_argument("--overshoot-max", type=float)
    p.add_argument("--v-min", type=float)
    p.add_argument("--peak-time-max", type=float)
    p.set_defaults(func=cmd_gain_map)

    p = sub.add_parser("ouq-bounds", parents=[common], help="bounds on the failure probability")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_ouq_bounds)

    p = sub.add_parser("pv-curve", parents=[common], help="single-diode I-V and P-V curve")
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--isc", type=float, default=DEFAULT_CELL.short_circuit_current)
    p.add_argument("--i0", type=float, default=DEFAULT_CELL.saturation_current)
    p.add_argument("--rs", type=float, default=DEFAULT_CELL.series_resistance)
    p.add_argument("--rsh", type=float, default=DEFAULT_CELL.shunt_resistance)
    p.add_argument("--ideality", type=float, default=DEFAULT_CELL.ideality)
    p.add_argument("--temperature", type=float, default=DEFAULT_CELL.temperature)
    p.set_defaults(func=cmd_pv_curve)

    p = sub.add_parser("accel-frontier", parents=[common], help="acceleration limit versus airspeed")
    p.add_argument("--mass", type=float, default=11.3)
    p.add_argument("--radius", type=float, default=1.25, help="sphere radius [m]")
    p.add_argument("--area", type=float, help="frontal area [m^2]; default disc of --radius")
    p.add_argument("--pv-area", type=float, help="PV area [m^2]; default frontal area")
    p.add_argument("--cd", type=float, default=1.0)
    p.add_argument("--eta", type=float, default=0.10)
    p.add_argument("--rho", type=float, default=DEFAULT_AIR_DENSITY)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--v-min", type=float)
    p.set_defaults(func=cmd_accel_frontier)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ScenarioError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
