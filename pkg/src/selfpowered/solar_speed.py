"""Steady airspeed a neutrally buoyant hull can hold on solar power alone.

At the solar-powered speed the drag power ``0.5 rho C_d A v^3`` equals the
PV power ``irradiance * eta * A_PV``. Zero angle of attack, no induced drag.

Partial PV coverage and altered drag are folded into an "updated" aspect
ratio so one reference chart per shape covers every case: the chart uses
``C_d = 2`` for cuboids (ratio ``L/b``) and ``C_d = 1`` for ellipsoids
(ratio ``L/D``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Literal

import numpy as np

from .dynamics import DEFAULT_AIR_DENSITY
from .powertrain import STANDARD_IRRADIANCE

CHART_DRAG = {"cuboid": 2.0, "ellipsoid": 1.0}


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class HullGeometry:
    """Cuboid: ``width`` a, ``height`` b, ``length`` L.
    Ellipsoid: ``width`` b, ``height`` D, ``length`` L.

    ``cd_max`` is the chart drag coefficient; ``cd_actual`` the vehicle's own.
    """

    shape: Literal["cuboid", "ellipsoid"]
    width: float
    height: float
    length: float
    cd_max: float | None = None
    cd_actual: float | None = None

    def __post_init__(self):
        if self.shape not in CHART_DRAG:
            raise ShapeError(f"unknown hull shape {self.shape!r}")
        if min(self.width, self.height, self.length) <= 0:
            raise ValueError("hull dimensions must be positive")
        if self.cd_max is None:
            object.__setattr__(self, "cd_max", CHART_DRAG[self.shape])
        if self.cd_actual is None:
            object.__setattr__(self, "cd_actual", self.cd_max)
        for cd in (self.cd_max, self.cd_actual):
            if not 0.001 <= cd <= 5.0:
                raise ValueError(f"drag coefficient {cd} outside [0.001, 5]")

    @property
    def frontal_area(self) -> float:
        if self.shape == "cuboid":
            return self.width * self.height
        return math.pi * self.width * self.height / 4

    @property
    def top_area(self) -> float:
        if self.shape == "cuboid":
            return self.width * self.length
        return math.pi * self.width * self.length / 4

    @property
    def aspect_ratio(self) -> float:
        return self.length / self.height


@dataclass(frozen=True)
class SpeedQuery:
    geometry: HullGeometry
    efficiency: float
    pv_area: float | None = None
    air_density: float = DEFAULT_AIR_DENSITY
    irradiance: float = STANDARD_IRRADIANCE

    def __post_init__(self):
        if not 0.0 <= self.efficiency < 1.0:
            raise ValueError("efficiency must lie in [0, 1)")
        if self.pv_area is not None and self.pv_area <= 0:
            raise ValueError("PV area must be positive")
        if self.air_density <= 0:
            raise ValueError("air density must be positive")


def chart_speed(ratio, efficiency, cd_chart: float, air_density: float = DEFAULT_AIR_DENSITY,
                irradiance: float = STANDARD_IRRADIANCE):
    """Reduced formula ``(irradiance * eta * ratio / (0.5 rho C_d))^(1/3)``."""
    return np.cbrt(irradiance * np.asarray(efficiency) * np.asarray(ratio) / (0.5 * air_density * cd_chart))


def updated_ratio(geometry: HullGeometry, pv_area: float) -> float:
    """Effective aspect ratio that makes the chart formula give the partial-coverage speed.

    ``cd_max * A_PV / (cd_actual * frontal_area)``.
    """
    if pv_area <= 0:
        raise ValueError("PV area must be positive")
    return geometry.cd_max * pv_area / (geometry.cd_actual * geometry.frontal_area)


def _speed(query: SpeedQuery, shape: str) -> float:
    g = query.geometry
    if g.shape != shape:
        raise ShapeError(f"expected a {shape} hull, got {g.shape}")
    area = g.top_area if query.pv_area is None else query.pv_area
    ratio = updated_ratio(g, area)
    return float(chart_speed(ratio, query.efficiency, g.cd_max, query.air_density, query.irradiance))


def cuboid_speed(query: SpeedQuery) -> float:
    return _speed(query, "cuboid")


def ellipsoid_speed(query: SpeedQuery) -> float:
    return _speed(query, "ellipsoid")


def solar_speed(query: SpeedQuery) -> float:
    return _speed(query, query.geometry.shape)


def speed_table(shape: str, efficiencies: Iterable[float], ratio_range: tuple[float, float], samples: int,
                air_density: float = DEFAULT_AIR_DENSITY) -> np.ndarray:
    """Rows of ``(ratio, eta, speed)`` over a linear ratio grid, one block per efficiency."""
    if shape not in CHART_DRAG:
        raise ShapeError(f"unknown hull shape {shape!r}")
    lo, hi = ratio_range
    if lo <= 0 or hi <= lo:
        raise ValueError("ratio range must be positive and increasing")
    if samples < 2:
        raise ValueError("need at least two samples")
    ratios = np.linspace(lo, hi, samples)
    rows = []
    for eta in efficiencies:
        v = chart_speed(ratios, eta, CHART_DRAG[shape], air_density)
        rows.append(np.column_stack([ratios, np.full(samples, eta), v]))
    return np.vstack(rows)


def accel_frontier(v, mass: float, drag_coeff: float, area: float, generated_power: float,
                   air_density: float = DEFAULT_AIR_DENSITY):
    """Largest acceleration that keeps ``P_c <= P_g`` at airspeed ``v``.

    ``a = (P_g - 0.5 rho C_d A v^3) / (m v)``; negative where ``v`` is above
    the solar-powered speed.
    """
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0):
        raise ValueError("frontier is undefined at zero airspeed")
    if generated_power <= 0:
        raise ValueError("generated power must be positive")
    a = (generated_power - 0.5 * air_density * drag_coeff * area * v**3) / (mass * v)
    return float(a) if a.ndim == 0 else a


def terminal_speed(drag_coeff: float, area: float, generated_power: float,
                   air_density: float = DEFAULT_AIR_DENSITY) -> float:
    """Airspeed where drag power equals ``generated_power``."""
    return float(np.cbrt(generated_power / (0.5 * air_density * drag_coeff * area)))
