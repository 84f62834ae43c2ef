"""Which (kp, kd) pairs keep a unit forward step self-powered?"""
import numpy as np

from selfpowered.ouq import BoundedInput, feasible_region, gain_region_map
from selfpowered.scenario import build_control, bundled_scenario, load_scenario

template = build_control(load_scenario(bundled_scenario("gain_map")))
gmap = gain_region_map(template, BoundedInput("kp", 0, 1000), BoundedInput("kd", 0, 1000), (21, 21))

np.set_printoptions(linewidth=160, precision=2, suppress=True)
print("max P_non, rows kp, every 4th kd column")
print(gmap.pnon_max[::4, ::4])

# Self-powered, under 5% overshoot, and reaching at least 0.5 m/s.
region = feasible_region(gmap, pnon_max=1.0, overshoot_max=0.05, v_min=0.5)
print("\n".join(region.summary()))
print("".join("#" if c else "." for c in region.mask[:, 10]), "(kp sweep at kd = 500)")

i, j = 2, 2  # the (100, 100) cell
print(f"kp={gmap.kp[i]} kd={gmap.kd[j]}: P_non={gmap.pnon_max[i, j]:.4f} overshoot={gmap.overshoot[i, j]:.3g}")
