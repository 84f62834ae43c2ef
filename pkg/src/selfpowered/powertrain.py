"""DC motor electromechanics, single-diode PV cell and solar power accounting.

Armature inductance is neglected everywhere (steady electrical balance
``R_a * I_a = v_a - K_e * omega``). There is no battery state of charge; the
battery-side power is an instantaneous quantity.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize

ELECTRON_CHARGE = 1.602e-19
BOLTZMANN = 1.381e-23
STANDARD_IRRADIANCE = 1000.0

#: Current tolerance of the PV bisection solve [A].
PV_CURRENT_TOL = 1e-9


class ConvergenceError(ArithmeticError):
    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (residual {residual:.3e} A)")


@dataclass(frozen=True)
class MotorParams:
    torque_constant: float
    voltage_constant: float
    resistance: float
    inductance: float = 0.0
    rotor_inertia: float = 1e-4
    prop_damping: float = 0.0
    supply_voltage: float = 12.0

    def __post_init__(self):
        if self.torque_constant <= 0 or self.voltage_constant <= 0 or self.resistance <= 0:
            raise ValueError("K_t, K_e and R_a must be positive")
        if not math.isclose(self.torque_constant, self.voltage_constant, rel_tol=1e-9):
            warnings.warn(
                f"K_t={self.torque_constant} != K_e={self.voltage_constant}; "
                "the two agree for an ideal DC motor in SI units",
                stacklevel=2,
            )


@dataclass(frozen=True)
class PvCellParams:
    short_circuit_current: float = 5.95
    saturation_current: float = 2.0800134217e-9
    series_resistance: float = 0.0
    shunt_resistance: float = 10.0
    ideality: float = 1.3
    temperature: float = 298.15

    def __post_init__(self):
        if self.short_circuit_current <= 0 or self.saturation_current <= 0:
            raise ValueError("I_SC and I_0 must be positive")
        if self.series_resistance < 0 or self.shunt_resistance <= 0:
            raise ValueError("R_s must be >= 0 and R_SH > 0")
        if self.temperature <= 0:
            raise ValueError("junction temperature must be positive")
        if not 1.0 <= self.ideality <= 2.0:
            raise ValueError("ideality factor must lie in [1, 2]")

    @property
    def thermal_voltage(self) -> float:
        """``n_i k_B T_c / q_e`` [V]."""
        return self.ideality * BOLTZMANN * self.temperature / ELECTRON_CHARGE


#: 125 mm x 125 mm monocrystalline cell fitted by scripts/calibrate_pv_cell.py.
DEFAULT_CELL = PvCellParams()
DEFAULT_CELL_AREA = 0.125 * 0.125


@dataclass(frozen=True)
class PvArrayConfig:
    area: float
    efficiency: float
    irradiance: float = STANDARD_IRRADIANCE
    cell: PvCellParams = DEFAULT_CELL
    series_count: int = 1
    parallel_count: int = 1

    def __post_init__(self):
        if self.area < 0:
            raise ValueError("PV area must be non-negative")
        if not 0.0 < self.efficiency < 1.0:
            raise ValueError("overall efficiency must lie in (0, 1)")
        if self.series_count < 1 or self.parallel_count < 1:
            raise ValueError("cell counts must be positive")


@dataclass(frozen=True)
class PowerSample:
    consumed: float
    generated: float

    @property
    def nondimensional(self) -> float:
        return nondimensional_power(self.consumed, self.generated)

    @property
    def self_powered(self) -> bool:
        return self.nondimensional <= 1.0


def motor_speed_derivative(omega_p, armature_current, params: MotorParams):
    """Rotor acceleration ``(K_t I_a - b_p omega) / J_m``."""
    return (params.torque_constant * armature_current - params.prop_damping * omega_p) / params.rotor_inertia


def armature_current(torque, params: MotorParams):
    return torque / params.torque_constant


def torque_from_voltage(v_a, omega_p, params: MotorParams):
    return params.torque_constant * (v_a - params.voltage_constant * omega_p) / params.resistance


def required_voltage(torque, omega_p, params: MotorParams):
    return params.resistance * torque / params.torque_constant + params.voltage_constant * omega_p


def motor_power(torque, omega_p, params: MotorParams):
    """Source power needed to hold ``torque`` at shaft speed ``omega_p`` [W]."""
    return required_voltage(torque, omega_p, params) * torque / params.torque_constant


def motor_power_with_pv(torque, omega_p, mode: int, pv_current, params: MotorParams):
    """Battery-side power with PV current feeding the bus.

    ``mode`` is +1 for drive and -1 for regeneration. Negative results mean
    energy flows into the battery.
    """
    if mode not in (1, -1):
        raise ValueError(f"mode must be +1 (drive) or -1 (regenerative), got {mode!r}")
    if np.any(np.asarray(pv_current) < 0):
        raise ValueError("PV current must be non-negative")
    v = required_voltage(torque, omega_p, params)
    return v * (mode * torque / params.torque_constant - pv_current)


def duty_cycle_power(duty, v_a, i_a):
    if not 0.0 <= duty <= 1.0:
        raise ValueError(f"duty cycle must lie in [0, 1], got {duty!r}")
    return duty * v_a * i_a


def _pv_residual(i, v, cell: PvCellParams):
    vd = v + i * cell.series_resistance
    diode = cell.saturation_current * math.expm1(vd / cell.thermal_voltage)
    return cell.short_circuit_current - diode - vd / cell.shunt_resistance - i


def pv_current(v: float, cell: PvCellParams = DEFAULT_CELL, full_output: bool = False):
    """Load current of one cell at terminal voltage ``v``.

    Solves the implicit single-diode relation by bisection on
    ``[0, 1.001 * I_SC]``. Beyond open circuit the current is 0; with
    ``full_output=True`` a ``(current, open_circuit)`` pair is returned.
    """
    if v < 0:
        raise ValueError("PV voltage must be non-negative")
    f0 = _pv_residual(0.0, v, cell)
    if f0 <= 0.0:
        return (0.0, True) if full_output else 0.0
    hi = 1.001 * cell.short_circuit_current
    if _pv_residual(hi, v, cell) > 0.0:
        raise ConvergenceError("no root below 1.001*I_SC", _pv_residual(hi, v, cell))
    i, info = optimize.bisect(_pv_residual, 0.0, hi, args=(v, cell), xtol=PV_CURRENT_TOL, full_output=True, disp=False)
    if not info.converged:
        raise ConvergenceError("PV current bisection did not converge", _pv_residual(i, v, cell))
    return (i, False) if full_output else i


def open_circuit_voltage(cell: PvCellParams = DEFAULT_CELL) -> float:
    """Voltage at which the load current vanishes."""
    f = lambda v: _pv_residual(0.0, v, cell)
    hi = cell.thermal_voltage * math.log1p(cell.short_circuit_current / cell.saturation_current) + 1e-12
    return optimize.brentq(f, 0.0, hi, xtol=1e-14)


def pv_iv_curve(cell: PvCellParams = DEFAULT_CELL, v_max: float | None = None, samples: int = 200) -> np.ndarray:
    """Sampled I-V and P-V curve as an ``(samples, 3)`` array of ``(V, I, P)``.

    ``v_max`` defaults to the open-circuit voltage.
    """
    if samples < 2:
        raise ValueError("need at least two samples")
    if v_max is None:
        v_max = open_circuit_voltage(cell)
    v = np.linspace(0.0, v_max, samples)
    i = np.array([pv_current(vk, cell) for vk in v])
    return np.column_stack([v, i, v * i])


def maximum_power_point(cell: PvCellParams = DEFAULT_CELL) -> tuple[float, float, float]:
    """``(V_mp, I_mp, P_mp)`` located by bounded scalar search."""
    voc = open_circuit_voltage(cell)
    res = optimize.minimize_scalar(
        lambda v: -v * pv_current(v, cell), bounds=(0.0, voc), method="bounded", options={"xatol": 1e-10}
    )
    v = float(res.x)
    i = pv_current(v, cell)
    return v, i, v * i


def array_iv_curve(array: PvArrayConfig, samples: int = 200) -> np.ndarray:
    """Series/parallel scaling of the cell curve."""
    curve = pv_iv_curve(array.cell, samples=samples)
    v = curve[:, 0] * array.series_count
    i = curve[:, 1] * array.parallel_count
    return np.column_stack([v, i, v * i])


def generated_power(array: PvArrayConfig) -> float:
    """Bulk PV power ``irradiance * efficiency * area`` [W]."""
    return array.irradiance * array.efficiency * array.area


def nondimensional_power(consumed, generated):
    """``P_c / P_g``; at most 1 means self-powered."""
    if np.any(np.asarray(generated) <= 0):
        raise ValueError("generated power must be positive")
    return np.divide(consumed, generated)
