"""A buoyant sphere follows a climb step and a slow forward ramp.

Prints the step metrics and where the power demand peaks relative to the
solar supply.
"""
from dataclasses import replace

import numpy as np

from selfpowered.control import duty_cycle_report, simulate_closed_loop
from selfpowered.scenario import build_control, bundled_scenario, load_scenario

sc = build_control(load_scenario(bundled_scenario("table1_step")))
r = simulate_closed_loop(sc)
print("generated power:", round(sc.generated_power, 2), "W")
print("z metrics:", {k: (round(v, 4) if v is not None else None) for k, v in r.metrics["z"].as_dict().items()})
k = int(np.argmax(r.Pnon))
print(f"peak P_non {r.Pnon[k]:.4f} at t={r.t[k]:.3f} s")
for d in duty_cycle_report(r, sc.segments):
    print(f"[{d.t_start}, {d.t_end}] max={d.max_pnon:.4f} mean={d.mean_pnon:.4f} self-powered={d.self_powered}")

# More derivative gain: how do overshoot and peak demand move?
for kd in (150.8, 250.0, 400.0):
    rk = simulate_closed_loop(replace(sc, gains_force=replace(sc.gains_force, kd=kd)))
    print(f"kd={kd:6.1f} overshoot={100 * rk.metrics['z'].overshoot:5.2f}%  max P_non={rk.max_pnon:.3f}")

# The same gains with a filtered derivative respond much faster, at a power cost.
f = simulate_closed_loop(build_control(load_scenario(bundled_scenario("table1_step_filtered"))))
m = f.metrics["z"]
print(f"filtered: rise={m.rise_time:.3f}s settling={m.settling_time:.3f}s overshoot={100 * m.overshoot:.1f}% "
      f"max P_non={f.max_pnon:.2f}")

# Fast gains on a climb profile blow straight through the budget.
agg = simulate_closed_loop(build_control(load_scenario(bundled_scenario("aggressive_z5"))))
print("aggressive gains: max P_non =", round(agg.max_pnon, 2))
