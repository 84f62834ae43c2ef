import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selfpowered.control import (
    COLUMNS,
    ConfigurationError,
    ControlScenario,
    PidGains,
    PidState,
    ReferenceSignal,
    allocate_two_motor,
    duty_cycle_report,
    held_power,
    performance_metrics,
    pid_step,
    reference_value,
    replay_power,
    run_batch,
    simulate_closed_loop,
    sphere_vehicle,
    step_metrics,
)
from selfpowered.dynamics import DivergenceError, LongitudinalState, integrate_step

VEHICLE, ARRAY = sphere_vehicle()


def scenario(**kw):
    base = dict(vehicle=VEHICLE, array=ARRAY, horizon=5.0, force_limit=1000.0, moment_limit=1000.0)
    base.update(kw)
    return ControlScenario(**base)


def test_gains_validation():
    with pytest.raises(ValueError):
        PidGains(kp=-1.0)
    with pytest.raises(ValueError):
        PidGains(kd=math.nan)
    with pytest.raises(ValueError):
        PidGains(1.0, derivative_filter=0.0)


def test_pid_examples():
    out, _ = pid_step(PidState(), 0.0, 1e-3, PidGains(1, 1, 1))
    assert out == 0.0
    out, _ = pid_step(PidState(), 3.0, 1e-3, PidGains(kp=2.0))
    assert out == 6.0
    state = PidState()
    for _ in range(2000):
        out, state = pid_step(state, 1.0, 1e-3, PidGains(ki=1.0))
    assert out == pytest.approx(2.0, abs=1e-3)


def test_pid_derivative_backward_difference():
    state = PidState(prev_error=0.5)
    out, new = pid_step(state, 0.7, 0.01, PidGains(kd=2.0))
    assert out == pytest.approx(2.0 * 0.2 / 0.01)
    assert new.prev_error == 0.7


def test_pid_filtered_derivative_tends_to_raw():
    raw, _ = pid_step(PidState(prev_error=0.1), 0.3, 1e-3, PidGains(kd=1.0))
    filt, _ = pid_step(PidState(prev_error=0.1), 0.3, 1e-3, PidGains(kd=1.0, derivative_filter=1e9))
    assert filt == pytest.approx(raw, rel=1e-5)


def test_pid_anti_windup_freezes_integral():
    gains = PidGains(kp=10.0, ki=5.0)
    state = PidState()
    for _ in range(5000):
        out, state = pid_step(state, 1.0, 1e-3, gains, limit=8.0)
        assert abs(out) <= 8.0
        assert state.integral <= 8.0 / gains.ki
    assert state.integral == 0.0


def test_reference_values():
    assert reference_value(ReferenceSignal("ramp", slope=5.0), 2.0) == 10.0
    step = ReferenceSignal("step", amplitude=1.0)
    assert reference_value(step, 0.0) == 0.0 and reference_value(step, 1e-9) == 1.0
    pw = ReferenceSignal("piecewise", breakpoints=((0, 0), (2, 4), (5, 4)))
    assert reference_value(pw, 1.0) == 2.0
    assert reference_value(pw, 9.0) == 4.0
    with pytest.raises(ValueError):
        ReferenceSignal("piecewise", breakpoints=((0, 0), (0, 1)))
    with pytest.raises(ValueError):
        reference_value(step, -1.0)


def test_scenario_validation():
    with pytest.raises(ConfigurationError):
        scenario(horizon=0.0)
    with pytest.raises(ConfigurationError):
        scenario(force_limit=0.0)
    with pytest.warns(UserWarning):
        scenario(vehicle=replace(VEHICLE, buoyancy=0.0))


def test_zero_scenario_is_all_zero():
    r = simulate_closed_loop(scenario(gains_force=PidGains(122.8, 10.8, 150.8), gains_pitch=PidGains(6.4, 0.25, 14.6)))
    for c in COLUMNS:
        if c not in ("t", "Pg"):
            assert np.all(r.series[c] == 0.0), c
    assert r.max_pnon == 0.0
    assert len(r) == 5001
    np.testing.assert_allclose(np.diff(r.t), 1e-3, rtol=1e-9)


def test_zero_gains_zero_wrench():
    r = simulate_closed_loop(scenario(x_reference=ReferenceSignal("ramp", slope=1.0),
                                      z_reference=ReferenceSignal("step", 1.0)))
    for c in ("Fx", "Fz", "M", "Pc", "Pnon"):
        assert np.all(r.series[c] == 0.0)


@settings(max_examples=15, deadline=None)
@given(st.floats(0, 800), st.floats(0, 40), st.floats(0, 800), st.floats(10, 2000), st.floats(1, 50))
def test_series_invariants(kp, ki, kd, flim, mlim):
    sc = scenario(gains_force=PidGains(kp, ki, kd), gains_pitch=PidGains(20, 1, 10), horizon=2.0,
                  x_reference=ReferenceSignal("ramp", slope=2.0), z_reference=ReferenceSignal("step", 1.0),
                  theta_reference=ReferenceSignal("step", 0.1), force_limit=flim, moment_limit=mlim)
    try:
        r = simulate_closed_loop(sc)
    except DivergenceError:
        return
    assert np.all(np.hypot(r.Fx, r.Fz) <= flim * (1 + 1e-12))
    assert np.all(np.abs(r.M) <= mlim)
    assert np.all(r.Pnon >= 0)
    np.testing.assert_allclose(r.Pnon, r.Pc / r.Pg, rtol=1e-12, atol=0)
    start = r.Fx * r.u + r.Fz * r.w + r.M * r.q
    end = r.Fx[:-1] * r.u[1:] + r.Fz[:-1] * r.w[1:] + r.M[:-1] * r.q[1:]
    assert np.all(r.Pc >= start - 1e-9)
    assert np.all(r.Pc[:-1] >= end - 1e-9)
    np.testing.assert_allclose(r.Pc, np.maximum(held_power(r.series), 0.0), rtol=1e-12, atol=1e-12)


def test_signed_power_keeps_regeneration():
    sc = scenario(gains_force=PidGains(200, 0, 300), x_reference=ReferenceSignal("step", 1.0), signed_power=True)
    r = simulate_closed_loop(sc)
    assert r.Pc.min() < 0
    np.testing.assert_array_equal(r.Pc, held_power(r.series))
    np.testing.assert_array_equal(replay_power(r, r.Pg[0], signed=True), r.Pnon)


def test_kick_within_one_step_is_counted():
    # unclamped derivative kick: the velocity is created inside the first hold interval
    sc = scenario(gains_force=PidGains(100, 0, 100), force_limit=math.inf, horizon=2.0,
                  x_reference=ReferenceSignal("step", 1.0))
    r = simulate_closed_loop(sc)
    assert r.Fx[1] > 1e4
    assert r.Pc[1] >= r.Fx[1] * r.u[2] > 0
    gained = 0.5 * sc.vehicle.mass * r.u.max() ** 2
    assert np.sum(r.Pc) * sc.dt >= gained


def test_doubling_generated_power_halves_pnon():
    sc = scenario(gains_force=PidGains(122.8, 10.8, 150.8), x_reference=ReferenceSignal("ramp", slope=1.0),
                  z_reference=ReferenceSignal("step", 1.0))
    r = simulate_closed_loop(sc)
    np.testing.assert_allclose(replay_power(r, r.Pg[0]), r.Pnon, rtol=1e-12)
    np.testing.assert_allclose(replay_power(r, 2 * r.Pg[0]), 0.5 * r.Pnon, rtol=1e-12, atol=0)
    # with the budget governor off, the trajectory does not depend on P_g
    r2 = simulate_closed_loop(replace(sc, array=replace(ARRAY, efficiency=0.2)))
    np.testing.assert_array_equal(r2.x, r.x)
    np.testing.assert_allclose(r2.Pnon, 0.5 * r.Pnon, rtol=1e-12, atol=0)


def test_kernel_matches_public_integrator():
    """Replay the recorded wrench through the reference RK4 step."""
    sc = scenario(gains_force=PidGains(50, 2, 80), gains_pitch=PidGains(10, 0.5, 5), horizon=1.0,
                  x_reference=ReferenceSignal("ramp", slope=1.0), z_reference=ReferenceSignal("step", 0.5),
                  theta_reference=ReferenceSignal("step", 0.05))
    r = simulate_closed_loop(sc)
    s = LongitudinalState()
    for k in range(len(r) - 1):
        wrench = ((r.Fx[k], r.Fz[k]), r.M[k])
        s = integrate_step(s, lambda t, st, w=wrench: w, sc.vehicle, sc.dt, k * sc.dt, k)
        np.testing.assert_allclose(
            s.to_array(), [r.x[k + 1], r.z[k + 1], r.theta[k + 1], r.u[k + 1], r.w[k + 1], r.q[k + 1]],
            rtol=1e-12, atol=1e-13)


def test_kernel_pid_matches_reference_pid():
    sc = scenario(gains_force=PidGains(30, 3, 40), horizon=0.5, force_limit=1e9, x_reference=ReferenceSignal("step", 1.0))
    r = simulate_closed_loop(sc)
    state = PidState()
    for k in range(len(r)):
        out, state = pid_step(state, r.references["x"][k] - r.x[k], sc.dt, sc.gains_force)
        assert out == pytest.approx(r.Fx[k], rel=1e-12, abs=1e-12)


def test_divergence_raises():
    fragile = replace(VEHICLE, velocity_cap=0.5)
    sc = scenario(vehicle=fragile, gains_force=PidGains(1000, 0, 0), x_reference=ReferenceSignal("step", 10.0))
    with pytest.raises(DivergenceError):
        simulate_closed_loop(sc)


def test_batch_rows_match_single_runs():
    sc = scenario(x_reference=ReferenceSignal("step", 1.0))
    gains = [PidGains(100, 0, 100), PidGains(400, 0, 50), PidGains(0, 0, 0)]
    agg, _ = run_batch(sc, gains)
    for g, row in zip(gains, agg):
        r = simulate_closed_loop(replace(sc, gains_force=g))
        assert row[0] == r.max_pnon
        assert row[4] == r.x[-1]


def test_first_order_metrics():
    t = np.linspace(0, 20, 20001)
    m = step_metrics(t, 1 - np.exp(-t))
    assert m.rise_time == pytest.approx(math.log(9), abs=1e-3)
    assert m.overshoot == pytest.approx(0.0, abs=1e-9)


def test_perfect_step_metrics():
    t = np.linspace(0, 5, 501)
    y = np.where(t > 0, 1.0, 0.0)
    m = performance_metrics(t, y, ReferenceSignal("step", 1.0))
    assert m.rise_time == pytest.approx(0.0, abs=0.01)
    assert m.overshoot == 0.0
    assert m.steady_state_error == 0.0


def test_second_order_overshoot():
    zeta, wn = 0.3, 2.0
    t = np.linspace(0, 30, 30001)
    wd = wn * math.sqrt(1 - zeta**2)
    y = 1 - np.exp(-zeta * wn * t) * (np.cos(wd * t) + zeta / math.sqrt(1 - zeta**2) * np.sin(wd * t))
    m = step_metrics(t, y)
    assert m.overshoot == pytest.approx(math.exp(-zeta * math.pi / math.sqrt(1 - zeta**2)), abs=1e-4)
    assert m.peak_time == pytest.approx(math.pi / wd, abs=2e-3)
    assert m.settling_time is not None and m.settling_time < 10


def test_ramp_metrics_are_absent():
    t = np.linspace(0, 5, 51)
    m = performance_metrics(t, t * 0.9, ReferenceSignal("ramp", slope=1.0))
    assert (m.rise_time, m.settling_time, m.overshoot, m.peak_time) == (None, None, None, None)
    assert m.steady_state_error == pytest.approx(0.5)


def test_never_settled_marker():
    t = np.linspace(0, 10, 1001)
    y = 1 - np.exp(-t / 20)
    assert step_metrics(t, y).settling_time is None


def test_duty_cycle_report():
    sc = scenario(gains_force=PidGains(122.8, 10.8, 150.8), horizon=4.0, x_reference=ReferenceSignal("step", 1.0))
    r = simulate_closed_loop(sc)
    segs = [(0.0, 1.5), (2.0, 4.0)]
    rep = duty_cycle_report(r, segs)
    for (t0, t1), d in zip(segs, rep):
        window = r.Pnon[(r.t >= t0 - 1e-12) & (r.t <= t1 + 1e-12)]
        assert d.max_pnon == window.max()
        assert d.mean_pnon == pytest.approx(window.mean())
        assert d.self_powered == (window.max() <= 1)
    whole = duty_cycle_report(r, [(0.0, 4.0)])[0]
    assert whole.max_pnon == r.max_pnon
    with pytest.raises(ConfigurationError):
        duty_cycle_report(r, [(1.0, 1.0)])
    with pytest.raises(ConfigurationError):
        duty_cycle_report(r, [(0.0, 5.0)])


def test_zero_scenario_duty_cycle():
    r = simulate_closed_loop(scenario())
    d = duty_cycle_report(r, [(0.0, 5.0)])[0]
    assert d.max_pnon == 0.0 and d.self_powered


def test_csv_round_trip(tmp_path):
    sc = scenario(gains_force=PidGains(122.8, 10.8, 150.8), horizon=1.0, z_reference=ReferenceSignal("step", 1.0))
    r = simulate_closed_loop(sc)
    path = tmp_path / "s.csv"
    r.to_csv(path)
    assert path.read_text().splitlines()[0] == ",".join(COLUMNS)
    back = np.loadtxt(path, delimiter=",", skiprows=1)
    np.testing.assert_array_equal(back, r.as_array())


def test_two_motor_allocation():
    k, l = 0.01, 1.65
    w1, w2 = allocate_two_motor(10.0, 2.0, k, l)
    assert k * (w1**2 + w2**2) == pytest.approx(10.0)
    assert k * l * (w1**2 - w2**2) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        allocate_two_motor(1.0, 100.0, k, l)


def test_cruise_governor_holds_budget():
    sc = scenario(gains_force=PidGains(50, 0, 200), force_limit=200.0, power_budget=True, horizon=60.0,
                  x_reference=ReferenceSignal("step", 500.0))
    r = simulate_closed_loop(sc)
    assert r.max_pnon <= 1.0 + 1e-12
    tail = r.t > 40
    assert r.u[tail].mean() == pytest.approx(5.503, abs=0.01)
