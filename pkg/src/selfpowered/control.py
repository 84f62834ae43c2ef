"""PID feedback over the longitudinal model, power accounting and step metrics.

Actuation: a PID pair on the inertial position errors commands a planar
thrust vector (the hull can vector its thrust), and a third PID on the pitch
error commands a pure moment. The thrust vector is clamped by magnitude,
rotated into the body frame and held constant over each RK4 step.

Consumed power of step ``k`` is the larger of ``F . v + M q`` at the start
and at the end of the step, since the held wrench acts over the whole
interval; a kick that builds the velocity within one step is then counted.
Its positive part is recorded, i.e. regeneration is not credited unless
``signed_power`` is set.

The time loop is one numba kernel shared by single runs and gain sweeps,
so a replayed cell is bit-identical to its entry in a map.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

import numba
import numpy as np

from .dynamics import DivergenceError, VehicleParams
from .powertrain import PvArrayConfig, generated_power

COLUMNS = ("t", "x", "z", "theta", "u", "w", "q", "Fx", "Fz", "M", "Pc", "Pg", "Pnon")
SETTLING_BAND = 0.02


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class PidGains:
    """Parallel-form gains. ``derivative_filter`` is an optional low-pass
    corner (rad/s) on the derivative term; ``None`` keeps the raw backward
    difference."""

    kp: float = 0.0
    ki: float = 0.0
    kd: float = 0.0
    derivative_filter: float | None = None

    def __post_init__(self):
        for name in ("kp", "ki", "kd"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {v!r}")
        if self.derivative_filter is not None and not self.derivative_filter > 0:
            raise ValueError("derivative filter corner must be positive")


@dataclass(frozen=True)
class PidState:
    integral: float = 0.0
    prev_error: float = 0.0
    derivative: float = 0.0


@dataclass(frozen=True)
class ReferenceSignal:
    kind: Literal["step", "ramp", "piecewise"] = "step"
    amplitude: float = 0.0
    slope: float = 0.0
    breakpoints: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.kind not in ("step", "ramp", "piecewise"):
            raise ValueError(f"unknown reference kind {self.kind!r}")
        if self.kind == "piecewise":
            if len(self.breakpoints) < 1:
                raise ValueError("piecewise reference needs at least one breakpoint")
            ts = [b[0] for b in self.breakpoints]
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise ValueError("breakpoint times must be strictly increasing")

    @classmethod
    def zero(cls) -> "ReferenceSignal":
        return cls("step", 0.0)

    @property
    def is_step(self) -> bool:
        return self.kind == "step"


def reference_value(signal: ReferenceSignal, t):
    """Reference at time(s) ``t``; a step switches on strictly after 0."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("reference time must be non-negative")
    if signal.kind == "step":
        out = np.where(t > 0, signal.amplitude, 0.0)
    elif signal.kind == "ramp":
        out = signal.slope * t
    else:
        ts, vs = zip(*signal.breakpoints)
        out = np.interp(t, ts, vs)
    return float(out) if out.ndim == 0 else out


def pid_step(state: PidState, error: float, dt: float, gains: PidGains, limit: float | None = None):
    """One controller update; returns ``(output, new_state)``.

    Trapezoidal integral, backward-difference derivative on the error and
    a symmetric output clamp at ``limit``. While the clamp is active the
    integral is held at its previous value.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    integral = state.integral + 0.5 * dt * (error + state.prev_error)
    de = error - state.prev_error
    if gains.derivative_filter is None:
        d = gains.kd * de / dt
    else:
        n = gains.derivative_filter
        d = (state.derivative + gains.kd * n * de) / (1.0 + n * dt)
    out = gains.kp * error + gains.ki * integral + d
    if limit is not None and abs(out) > limit:
        out = math.copysign(limit, out)
        integral = state.integral
    return out, PidState(integral, error, d)


@dataclass(frozen=True)
class ControlScenario:
    vehicle: VehicleParams
    array: PvArrayConfig
    gains_force: PidGains = PidGains()
    gains_pitch: PidGains = PidGains()
    x_reference: ReferenceSignal = ReferenceSignal.zero()
    z_reference: ReferenceSignal = ReferenceSignal.zero()
    theta_reference: ReferenceSignal = ReferenceSignal.zero()
    horizon: float = 20.0
    dt: float = 1e-3
    force_limit: float = math.inf
    moment_limit: float = math.inf
    power_budget: bool = False
    signed_power: bool = False
    duty_cycles: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if not self.horizon > 0 or not self.dt > 0:
            raise ConfigurationError("horizon and dt must be positive")
        if self.dt > self.horizon:
            raise ConfigurationError("dt exceeds the horizon")
        if not self.force_limit > 0 or not self.moment_limit > 0:
            raise ConfigurationError("wrench limits must be positive")
        if generated_power(self.array) <= 0:
            raise ConfigurationError("the PV array produces no power")
        if not self.vehicle.neutrally_buoyant:
            warnings.warn("vehicle is not neutrally buoyant; thrust must carry the net weight", stacklevel=2)

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def time(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt

    @property
    def generated_power(self) -> float:
        return generated_power(self.array)

    @property
    def segments(self) -> tuple[tuple[float, float], ...]:
        return self.duty_cycles or ((0.0, self.steps * self.dt),)


@dataclass(frozen=True)
class PerformanceMetrics:
    """``None`` marks a metric that is undefined for the response."""

    rise_time: float | None
    settling_time: float | None
    overshoot: float | None
    peak_time: float | None
    steady_state_error: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("rise_time", "settling_time", "overshoot", "peak_time", "steady_state_error")}


@dataclass(frozen=True)
class DutyCycle:
    t_start: float
    t_end: float
    max_pnon: float
    mean_pnon: float

    @property
    def self_powered(self) -> bool:
        return self.max_pnon <= 1.0


@dataclass
class SimResult:
    series: dict[str, np.ndarray]
    references: dict[str, np.ndarray]
    metrics: dict[str, PerformanceMetrics] = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.__dict__["series"][name]
        except KeyError:
            raise AttributeError(name) from None

    def __len__(self):
        return len(self.series["t"])

    def as_array(self) -> np.ndarray:
        return np.column_stack([self.series[c] for c in COLUMNS])

    def to_csv(self, path) -> None:
        np.savetxt(path, self.as_array(), fmt="%.17g", delimiter=",", header=",".join(COLUMNS), comments="")

    @property
    def max_pnon(self) -> float:
        return float(np.max(self.series["Pnon"]))


# ---------------------------------------------------------------------------
# kernel


@numba.njit(cache=True)
def _pid(integral, prev, dfilt, e, dt, kp, ki, kd, n):
    integ = integral + 0.5 * dt * (e + prev)
    de = e - prev
    if n > 0.0:
        d = (dfilt + kd * n * de) / (1.0 + n * dt)
    else:
        d = kd * de / dt
    return kp * e + ki * integ + d, integ, d


@numba.njit(cache=True)
def _rhs(y, fx, fz, mom, veh, out):
    # veh: mass, iyy, g_net, kx, kz, c_rot
    th, u, w, q = y[2], y[3], y[4], y[5]
    s, c = math.sin(th), math.cos(th)
    m = veh[0]
    out[0] = u * c + w * s
    out[1] = -u * s + w * c
    out[2] = q
    out[3] = (fx - veh[3] * u * abs(u)) / m - veh[2] * s - q * w
    out[4] = (fz - veh[4] * w * abs(w)) / m + veh[2] * c + q * u
    out[5] = (mom - veh[5] * q) / veh[1]


@numba.njit(cache=True)
def _rk4(y, fx, fz, mom, veh, dt, out, k1, k2, k3, k4, tmp):
    _rhs(y, fx, fz, mom, veh, k1)
    for j in range(6):
        tmp[j] = y[j] + 0.5 * dt * k1[j]
    _rhs(tmp, fx, fz, mom, veh, k2)
    for j in range(6):
        tmp[j] = y[j] + 0.5 * dt * k2[j]
    _rhs(tmp, fx, fz, mom, veh, k3)
    for j in range(6):
        tmp[j] = y[j] + dt * k3[j]
    _rhs(tmp, fx, fz, mom, veh, k4)
    for j in range(6):
        out[j] = y[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])


@numba.njit(cache=True)
def _closed_loop(veh, vcap, refs, dt, gains_f, gains_p, fmax, mmax, pg, budget, signed,
                 channel, record, series, agg):
    """Run every gain row of ``gains_f``/``gains_p`` over the reference table.

    ``agg`` columns: pnon_max, vmax, peak, peak_index, final, diverged_step.
    ``series`` is filled only when ``record`` (single-row batches).
    """
    nb = gains_f.shape[0]
    ns = refs.shape[0]
    y = np.empty(6)
    yn = np.empty(6)
    k1 = np.empty(6)
    k2 = np.empty(6)
    k3 = np.empty(6)
    k4 = np.empty(6)
    tmp = np.empty(6)
    for b in range(nb):
        for j in range(6):
            y[j] = 0.0
        ix = ex0 = dx = 0.0
        iz = ez0 = dz = 0.0
        ith = eth0 = dth = 0.0
        pmax = 0.0
        vmax = 0.0
        peak = -np.inf
        peak_idx = -1
        diverged = -1
        for k in range(ns):
            last = k == ns - 1
            ex = refs[k, 0] - y[0]
            ez = refs[k, 1] - y[1]
            eth = refs[k, 2] - y[2]
            fxi, nix, ndx = _pid(ix, ex0, dx, ex, dt, gains_f[b, 0], gains_f[b, 1], gains_f[b, 2], gains_f[b, 3])
            fzi, niz, ndz = _pid(iz, ez0, dz, ez, dt, gains_f[b, 0], gains_f[b, 1], gains_f[b, 2], gains_f[b, 3])
            mom, nith, ndth = _pid(ith, eth0, dth, eth, dt, gains_p[b, 0], gains_p[b, 1], gains_p[b, 2],
                                   gains_p[b, 3])
            sat_f = False
            sat_m = False
            mag = math.hypot(fxi, fzi)
            if mag > fmax:
                fxi *= fmax / mag
                fzi *= fmax / mag
                sat_f = True
            if abs(mom) > mmax:
                mom = math.copysign(mmax, mom)
                sat_m = True
            s, c = math.sin(y[2]), math.cos(y[2])
            fx = c * fxi - s * fzi
            fz = s * fxi + c * fzi
            # the wrench is held over the step: its power is checked at both ends
            p0 = fx * y[3] + fz * y[4] + mom * y[5]
            p1 = p0
            if not last:
                _rk4(y, fx, fz, mom, veh, dt, yn, k1, k2, k3, k4, tmp)
                p1 = fx * yn[3] + fz * yn[4] + mom * yn[5]
                if not math.isfinite(p1):
                    p1 = p0
            power = max(p0, p1)
            if budget and power > pg:
                # largest wrench scale whose power stays within P_g at both ends;
                # the small margin keeps rounding from landing a hair above P_g
                target = pg * (1.0 - 1e-12)
                lo = 0.0
                hi = 1.0 if p0 <= target else target / p0
                for _ in range(60):
                    mid = 0.5 * (lo + hi)
                    ok_mid = True
                    if not last:
                        _rk4(y, mid * fx, mid * fz, mid * mom, veh, dt, yn, k1, k2, k3, k4, tmp)
                        ok_mid = mid * (fx * yn[3] + fz * yn[4] + mom * yn[5]) <= target
                    if ok_mid:
                        lo = mid
                    else:
                        hi = mid
                fx *= lo
                fz *= lo
                mom *= lo
                p0 = fx * y[3] + fz * y[4] + mom * y[5]
                p1 = p0
                if not last:
                    _rk4(y, fx, fz, mom, veh, dt, yn, k1, k2, k3, k4, tmp)
                    p1 = fx * yn[3] + fz * yn[4] + mom * yn[5]
                power = max(p0, p1)
                sat_f = True
                sat_m = True
            if not sat_f:
                ix = nix
                iz = niz
            if not sat_m:
                ith = nith
            ex0, ez0, eth0 = ex, ez, eth
            dx, dz, dth = ndx, ndz, ndth
            pc = power if signed else max(power, 0.0)
            pnon = pc / pg
            speed = math.hypot(y[3], y[4])
            pmax = max(pmax, pnon)
            vmax = max(vmax, speed)
            yc = y[channel]
            if yc > peak:
                peak = yc
                peak_idx = k
            if record:
                series[k, 0] = k * dt
                for j in range(6):
                    series[k, 1 + j] = y[j]
                series[k, 7] = fx
                series[k, 8] = fz
                series[k, 9] = mom
                series[k, 10] = pc
                series[k, 11] = pg
                series[k, 12] = pnon
            if last:
                break
            ok = True
            for j in range(6):
                y[j] = yn[j]
                if not math.isfinite(y[j]):
                    ok = False
            if not ok or math.hypot(y[3], y[4]) > vcap:
                diverged = k + 1
                break
        agg[b, 0] = pmax
        agg[b, 1] = vmax
        agg[b, 2] = peak
        agg[b, 3] = peak_idx
        agg[b, 4] = y[channel]
        agg[b, 5] = diverged


def _vehicle_vector(p: VehicleParams) -> np.ndarray:
    half_rho = 0.5 * p.air_density
    return np.array([
        p.mass,
        p.inertia[1, 1],
        p.net_gravity,
        half_rho * p.drag_coeff[0] * p.frontal_area[0],
        half_rho * p.drag_coeff[2] * p.frontal_area[2],
        p.rotational_damping,
    ])


def _gain_row(g: PidGains) -> list[float]:
    return [g.kp, g.ki, g.kd, g.derivative_filter or 0.0]


def reference_table(scenario: ControlScenario) -> np.ndarray:
    t = scenario.time
    return np.column_stack([
        reference_value(scenario.x_reference, t),
        reference_value(scenario.z_reference, t),
        reference_value(scenario.theta_reference, t),
    ])


CHANNELS = {"x": 0, "z": 1, "theta": 2}


def run_batch(scenario: ControlScenario, gains_force: Sequence[PidGains] | np.ndarray,
              gains_pitch: Sequence[PidGains] | np.ndarray | None = None, channel: str = "x",
              record: bool = False):
    """Low-level entry: run many gain sets against one scenario.

    Gains are either PidGains sequences or ``(n, 4)`` arrays of
    ``(kp, ki, kd, filter)`` with filter 0 meaning none. Returns
    ``(aggregates, series)``; see ``_closed_loop`` for the aggregate layout.
    """
    gf = np.asarray([_gain_row(g) for g in gains_force] if not isinstance(gains_force, np.ndarray)
                    else gains_force, dtype=float).reshape(-1, 4)
    if gains_pitch is None:
        gp = np.tile(_gain_row(scenario.gains_pitch), (gf.shape[0], 1))
    else:
        gp = np.asarray([_gain_row(g) for g in gains_pitch] if not isinstance(gains_pitch, np.ndarray)
                        else gains_pitch, dtype=float).reshape(-1, 4)
    if gp.shape != gf.shape:
        raise ConfigurationError("force and pitch gain batches differ in length")
    refs = reference_table(scenario)
    if record and gf.shape[0] != 1:
        raise ConfigurationError("series recording needs a single gain set")
    series = np.zeros((refs.shape[0] if record else 0, len(COLUMNS)))
    agg = np.zeros((gf.shape[0], 6))
    _closed_loop(
        _vehicle_vector(scenario.vehicle), float(scenario.vehicle.velocity_cap), refs, float(scenario.dt),
        gf, gp, float(scenario.force_limit), float(scenario.moment_limit), float(scenario.generated_power),
        bool(scenario.power_budget), bool(scenario.signed_power), CHANNELS[channel], record, series, agg,
    )
    return agg, series


def simulate_closed_loop(scenario: ControlScenario) -> SimResult:
    """Closed-loop run on the uniform grid ``0, dt, ..., horizon``.

    Raises DivergenceError when the state stops being finite or the speed
    passes the vehicle's velocity cap.
    """
    agg, series = run_batch(scenario, [scenario.gains_force], [scenario.gains_pitch], record=True)
    if agg[0, 5] >= 0:
        step = int(agg[0, 5])
        raise DivergenceError(step, f"t = {step * scenario.dt:.6g} s")
    refs = reference_table(scenario)
    result = SimResult(
        series={c: series[:, i].copy() for i, c in enumerate(COLUMNS)},
        references={"x": refs[:, 0], "z": refs[:, 1], "theta": refs[:, 2]},
    )
    for name, signal in (("x", scenario.x_reference), ("z", scenario.z_reference),
                         ("theta", scenario.theta_reference)):
        result.metrics[name] = performance_metrics(result.series["t"], result.series[name], signal)
    return result


def replay_power(result: SimResult, generated: float, signed: bool = False) -> np.ndarray:
    """Recompute ``P_non`` for a recorded state/wrench trajectory under another ``P_g``."""
    if generated <= 0:
        raise ValueError("generated power must be positive")
    p = held_power(result.series)
    if not signed:
        p = np.maximum(p, 0.0)
    return p / generated


def held_power(series: dict) -> np.ndarray:
    """Peak of ``F . v + M q`` over each hold interval, from a recorded series.

    Row ``k`` holds its wrench until row ``k + 1``; the power is taken at
    both ends of that interval. The last row has no successor.
    """
    fx, fz, m = series["Fx"], series["Fz"], series["M"]
    u, w, q = series["u"], series["w"], series["q"]
    p0 = fx * u + fz * w + m * q
    p1 = p0.copy()
    p1[:-1] = fx[:-1] * u[1:] + fz[:-1] * w[1:] + m[:-1] * q[1:]
    return np.maximum(p0, p1)


# ---------------------------------------------------------------------------
# metrics


def _crossing(t, y, level):
    """First time ``y`` reaches ``level`` (linear interpolation), or None."""
    idx = np.flatnonzero(y >= level)
    if idx.size == 0:
        return None
    i = idx[0]
    if i == 0:
        return float(t[0])
    y0, y1 = y[i - 1], y[i]
    return float(t[i - 1] + (level - y0) / (y1 - y0) * (t[i] - t[i - 1]))


def step_metrics(t, y, reference_final: float = 1.0) -> PerformanceMetrics:
    """Step-response metrics against the last sample as final value.

    Rise is the 10% to 90% interval, settling the last entry into the 2%
    band (``None`` if that happens in the last 5% of the record, i.e. the
    response was still moving), overshoot ``(peak - final)/|final|`` and
    peak time the first occurrence of the global maximum.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ValueError("empty series")
    sse = float(reference_final - y[-1])
    final = y[-1]
    if final == 0.0:
        return PerformanceMetrics(None, None, None, None, sse)
    yn = y / final
    t10, t90 = _crossing(t, yn, 0.1), _crossing(t, yn, 0.9)
    rise = None if t10 is None or t90 is None else t90 - t10
    outside = np.flatnonzero(np.abs(yn - 1.0) > SETTLING_BAND)
    if outside.size == 0:
        settling = float(t[0])
    else:
        settling = float(t[min(outside[-1] + 1, t.size - 1)])
        if settling > t[0] + 0.95 * (t[-1] - t[0]):
            settling = None
    ipk = int(np.argmax(yn))
    overshoot = max(0.0, float(yn[ipk] - 1.0))
    return PerformanceMetrics(rise, settling, overshoot, float(t[ipk]), sse)


def performance_metrics(t, y, reference: ReferenceSignal) -> PerformanceMetrics:
    """Step metrics for step references; only the tracking error otherwise."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ValueError("empty series")
    target = reference_value(reference, t[-1])
    if reference.is_step and reference.amplitude != 0.0:
        return step_metrics(t, y, target)
    return PerformanceMetrics(None, None, None, None, float(target - y[-1]))


def duty_cycle_report(result: SimResult, segments: Sequence[tuple[float, float]]) -> list[DutyCycle]:
    """Max and mean ``P_non`` per closed time window ``[t_start, t_end]``."""
    t = result.series["t"]
    pnon = result.series["Pnon"]
    eps = 1e-9 * max(1.0, t[-1])
    out = []
    for t0, t1 in segments:
        if t0 < -eps or t1 > t[-1] + eps:
            raise ConfigurationError(f"duty cycle ({t0}, {t1}) lies outside the horizon")
        mask = (t >= t0 - eps) & (t <= t1 + eps)
        if t1 <= t0 or not mask.any():
            raise ConfigurationError(f"duty cycle ({t0}, {t1}) contains no samples")
        window = pnon[mask]
        out.append(DutyCycle(float(t0), float(t1), float(window.max()), float(window.mean())))
    return out


def allocate_two_motor(force: float, moment: float, lift_constant: float, arm_length: float):
    """Rotor speeds for ``F = k(w1^2 + w2^2)`` and ``M = k l (w1^2 - w2^2)``.

    Diagnostic only; raises when the wrench needs a negative squared speed.
    """
    if lift_constant <= 0 or arm_length <= 0:
        raise ValueError("lift constant and arm length must be positive")
    a = 0.5 * (force / lift_constant + moment / (lift_constant * arm_length))
    b = 0.5 * (force / lift_constant - moment / (lift_constant * arm_length))
    if a < 0 or b < 0:
        raise ValueError("wrench is not reachable with non-negative rotor thrusts")
    return math.sqrt(a), math.sqrt(b)


def sphere_vehicle(radius: float = 1.25, mass: float = 11.3, pitch_inertia: float = 2.76,
                   drag_coeff: float = 1.0, efficiency: float = 0.10, **kwargs):
    """Neutrally buoyant spherical hull with its projected disc covered in PV."""
    area = math.pi * radius**2
    vehicle = VehicleParams(
        mass=mass,
        inertia=np.diag([pitch_inertia, pitch_inertia, pitch_inertia]),
        drag_coeff=(drag_coeff,) * 3,
        frontal_area=(area,) * 3,
        **kwargs,
    )
    return vehicle, PvArrayConfig(area=area, efficiency=efficiency)


def with_gains(scenario: ControlScenario, **kwargs) -> ControlScenario:
    return replace(scenario, **kwargs)
