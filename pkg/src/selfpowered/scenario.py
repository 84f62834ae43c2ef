"""TOML scenario files.

Physical quantities carry their unit in the key (``mass_kg``, ``dt_s``).
Unknown keys are rejected with their dotted location so a typo never
silently falls back to a default.
"""
from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .control import ControlScenario, PidGains, ReferenceSignal
from .dynamics import DEFAULT_AIR_DENSITY, DEFAULT_GRAVITY, VehicleParams
from .ouq import AdmissibleSet, BoundedInput, closed_loop_response
from .powertrain import STANDARD_IRRADIANCE, PvArrayConfig


class ScenarioError(ValueError):
    """Malformed scenario; the message names the offending location."""


SCHEMA: dict[str, Any] = {
    "name": str,
    "description": str,
    "vehicle": {
        "mass_kg": float,
        "pitch_inertia_kgm2": float,
        "radius_m": float,
        "frontal_area_m2": float,
        "drag_coeff": float,
        "air_density_kgm3": float,
        "gravity_mps2": float,
        "buoyancy_N": float,
        "rotational_damping_Nms": float,
        "velocity_cap_mps": float,
    },
    "pv": {
        "area_m2": float,
        "efficiency": float,
        "irradiance_Wm2": float,
    },
    "control": {
        "force_limit_N": float,
        "moment_limit_Nm": float,
        "power_budget": bool,
        "signed_power": bool,
        "force": {"kp": float, "ki": float, "kd": float, "derivative_filter_radps": float},
        "pitch": {"kp": float, "ki": float, "kd": float, "derivative_filter_radps": float},
        "reference": {
            axis: {"kind": str, "amplitude": float, "slope_per_s": float, "breakpoints": list}
            for axis in ("x", "z", "theta")
        },
    },
    "simulation": {
        "horizon_s": float,
        "dt_s": float,
        "duty_cycles_s": list,
    },
    "gain_map": {
        "kp_min": float, "kp_max": float, "kd_min": float, "kd_max": float,
        "kp_points": int, "kd_points": int, "channel": str,
    },
    "ouq": {
        "response": str,
        "coefficients": list,
        "offset": float,
        "mean_constraint": float,
        "mean_constrained": bool,
        "threshold": float,
        "starts": int,
        "sweeps": int,
        "grid_points": int,
        "random_candidates": int,
        "refinements": int,
        "inputs": [{"name": str, "lower": float, "upper": float, "support_points": int}],
    },
    "output": {
        "series_csv": str,
        "metrics": str,
        "duty_report": str,
        "gain_map_csv": str,
        "ouq_report": str,
        "manifest": str,
    },
}


def _validate(data: Any, schema: Any, where: str) -> None:
    if isinstance(schema, dict):
        if not isinstance(data, dict):
            raise ScenarioError(f"{where or 'scenario'}: expected a table")
        for key, value in data.items():
            loc = f"{where}.{key}" if where else key
            if key not in schema:
                raise ScenarioError(f"unknown key '{loc}'")
            _validate(value, schema[key], loc)
    elif isinstance(schema, list):
        if not isinstance(data, list):
            raise ScenarioError(f"{where}: expected an array of tables")
        for i, item in enumerate(data):
            _validate(item, schema[0], f"{where}[{i}]")
    elif schema is float:
        if isinstance(data, bool) or not isinstance(data, (int, float)):
            raise ScenarioError(f"{where}: expected a number, got {data!r}")
        if not math.isfinite(data):
            raise ScenarioError(f"{where}: value must be finite")
    elif schema is int:
        if isinstance(data, bool) or not isinstance(data, int):
            raise ScenarioError(f"{where}: expected an integer, got {data!r}")
    elif not isinstance(data, schema):
        raise ScenarioError(f"{where}: expected {schema.__name__}, got {data!r}")


@dataclass(frozen=True)
class Scenario:
    data: dict
    source: str

    @property
    def digest(self) -> str:
        """SHA-256 of the canonical parsed content (comments and layout do not count)."""
        canon = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def section(self, name: str) -> dict:
        return self.data.get(name, {})

    def output_name(self, key: str, default: str) -> str:
        return self.section("output").get(key, default)


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{source}: {exc}") from exc
    try:
        _validate(data, SCHEMA, "")
    except ScenarioError as exc:
        raise ScenarioError(f"{source}: {exc}") from exc
    return Scenario(data, source)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc.strerror}") from exc
    return parse_scenario(text, str(path))


def bundled_scenario(name: str) -> Path:
    """Path of a scenario shipped with the package, e.g. ``"table1_step"``."""
    here = Path(__file__).parent / "scenarios"
    path = here / (name if name.endswith(".toml") else f"{name}.toml")
    if not path.exists():
        raise ScenarioError(f"no bundled scenario {name!r}; have {sorted(p.stem for p in here.glob('*.toml'))}")
    return path


def _gains(d: dict) -> PidGains:
    try:
        return PidGains(d.get("kp", 0.0), d.get("ki", 0.0), d.get("kd", 0.0), d.get("derivative_filter_radps"))
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc


def _reference(d: dict, where: str) -> ReferenceSignal:
    if not d:
        return ReferenceSignal.zero()
    kind = d.get("kind", "step")
    bp = d.get("breakpoints", [])
    try:
        bp = tuple((float(t), float(v)) for t, v in bp)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}.breakpoints: expected [[t_s, value], ...]") from exc
    try:
        return ReferenceSignal(kind, d.get("amplitude", 0.0), d.get("slope_per_s", 0.0), bp)
    except ValueError as exc:
        raise ScenarioError(f"{where}: {exc}") from exc


def build_control(sc: Scenario) -> ControlScenario:
    v = sc.section("vehicle")
    pv = sc.section("pv")
    c = sc.section("control")
    sim = sc.section("simulation")
    for key in ("mass_kg", "pitch_inertia_kgm2"):
        if key not in v:
            raise ScenarioError(f"missing key 'vehicle.{key}'")
    if "radius_m" in v:
        disc = math.pi * v["radius_m"] ** 2
    else:
        disc = None
    area = v.get("frontal_area_m2", disc)
    if area is None:
        raise ScenarioError("vehicle needs 'radius_m' or 'frontal_area_m2'")
    pv_area = pv.get("area_m2", disc)
    if pv_area is None:
        raise ScenarioError("pv needs 'area_m2' when the vehicle has no 'radius_m'")
    if "efficiency" not in pv:
        raise ScenarioError("missing key 'pv.efficiency'")
    iyy = v["pitch_inertia_kgm2"]
    try:
        vehicle = VehicleParams(
            mass=v["mass_kg"],
            inertia=np.diag([iyy, iyy, iyy]),
            buoyancy=v.get("buoyancy_N"),
            gravity=v.get("gravity_mps2", DEFAULT_GRAVITY),
            drag_coeff=np.full(3, v.get("drag_coeff", 1.0)),
            frontal_area=np.full(3, area),
            air_density=v.get("air_density_kgm3", DEFAULT_AIR_DENSITY),
            rotational_damping=v.get("rotational_damping_Nms", 0.0),
            velocity_cap=v.get("velocity_cap_mps", 100.0),
        )
        array = PvArrayConfig(area=pv_area, efficiency=pv["efficiency"],
                              irradiance=pv.get("irradiance_Wm2", STANDARD_IRRADIANCE))
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc
    refs = c.get("reference", {})
    duty = tuple((float(a), float(b)) for a, b in sim.get("duty_cycles_s", []))
    try:
        return ControlScenario(
            vehicle=vehicle,
            array=array,
            gains_force=_gains(c.get("force", {})),
            gains_pitch=_gains(c.get("pitch", {})),
            x_reference=_reference(refs.get("x", {}), "control.reference.x"),
            z_reference=_reference(refs.get("z", {}), "control.reference.z"),
            theta_reference=_reference(refs.get("theta", {}), "control.reference.theta"),
            horizon=sim.get("horizon_s", 20.0),
            dt=sim.get("dt_s", 1e-3),
            force_limit=c.get("force_limit_N", math.inf),
            moment_limit=c.get("moment_limit_Nm", math.inf),
            power_budget=c.get("power_budget", False),
            signed_power=c.get("signed_power", False),
            duty_cycles=duty,
        )
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc


@dataclass(frozen=True)
class OuqSettings:
    admissible: AdmissibleSet
    starts: int
    sweeps: int
    grid: int
    random_candidates: int
    refinements: int


def build_ouq(sc: Scenario) -> OuqSettings:
    o = sc.section("ouq")
    if not o:
        raise ScenarioError("scenario has no [ouq] section")
    specs = o.get("inputs", [])
    if not specs:
        raise ScenarioError("ouq.inputs must list at least one input")
    try:
        inputs = [BoundedInput(s["name"], s["lower"], s["upper"], s.get("support_points", 2)) for s in specs]
    except KeyError as exc:
        raise ScenarioError(f"ouq.inputs: missing key {exc.args[0]!r}") from exc
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc
    kind = o.get("response", "linear")
    if kind == "linear":
        coeffs = [float(c) for c in o.get("coefficients", [1.0] * len(inputs))]
        if len(coeffs) != len(inputs):
            raise ScenarioError("ouq.coefficients must match the number of inputs")
        offset = o.get("offset", 0.0)
        response = lambda x: offset + sum(c * xi for c, xi in zip(coeffs, x))
    elif kind == "closed_loop":
        try:
            response = closed_loop_response(build_control(sc), [i.name for i in inputs])
        except ValueError as exc:
            raise ScenarioError(f"ouq: {exc}") from exc
    else:
        raise ScenarioError(f"ouq.response: unknown response {kind!r} (linear, closed_loop)")
    mean = o.get("mean_constraint", 1.0) if o.get("mean_constrained", True) else None
    adm = AdmissibleSet(inputs, response, mean, o.get("threshold", 1.0))
    return OuqSettings(adm, o.get("starts", 32), o.get("sweeps", 20), o.get("grid_points", 33),
                       o.get("random_candidates", 8), o.get("refinements", 40))
