"""How fast can a hull fly on sunlight alone?"""
import math

import numpy as np

from selfpowered.solar_speed import (CHART_DRAG, HullGeometry, SpeedQuery, accel_frontier, chart_speed,
                                     solar_speed, terminal_speed)

# A 2 m x 1 m x 3 m box with its whole top covered in cells at 20% overall efficiency.
box = HullGeometry("cuboid", width=2.0, height=1.0, length=3.0)
print("box, full cover:", round(solar_speed(SpeedQuery(box, 0.20)), 3), "m/s")

# Only 0.47 m^2 of cells and a rounder shell (cd ~ 1) means a smaller effective ratio.
rounded = HullGeometry("cuboid", width=2.0, height=1.0, length=3.0, cd_actual=1.0)
print("box, partial cover:", round(solar_speed(SpeedQuery(rounded, 0.20, pv_area=0.47)), 3), "m/s")

# The ellipsoid chart: speed against aspect ratio for a few efficiencies.
ratios = np.array([0.5, 1.0, 2.0, 5.0, 10.0])
for eta in (0.05, 0.10, 0.20):
    print(f"eta={eta:.2f}", np.round(chart_speed(ratios, eta, CHART_DRAG["ellipsoid"]), 2))

# Speed scales with the cube root of both ratio and efficiency.
print("x8 efficiency -> x", chart_speed(2.0, 0.4, 1.0) / chart_speed(2.0, 0.05, 1.0))

# For a 1.25 m sphere, the surplus power sets how hard it can still accelerate.
area = math.pi * 1.25**2
pg = 1000 * 0.10 * area
v_top = terminal_speed(1.0, area, pg)
v = np.linspace(0.5, v_top, 6)
for vi, ai in zip(v, accel_frontier(v, 11.3, 1.0, area, pg)):
    print(f"v={vi:5.2f} m/s  a_max={ai:8.3f} m/s^2")
