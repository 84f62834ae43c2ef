"""Rigid-body equations of motion for a buoyant multirotor.

Body axes are x forward, y right, z down; inertial z also points down, so
gravity acts along +z and buoyancy along -z. Buoyancy is applied at the
centre of gravity and produces no moment. Added mass is folded into the
scalar ``mass``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .frames import (
    EulerAngles,
    euler_rates_from_body_rates,
    rotation_body_from_inertial,
    skew,
)

DEFAULT_AIR_DENSITY = 1.2
DEFAULT_GRAVITY = 9.81


class DivergenceError(RuntimeError):
    def __init__(self, step: int, detail: str = ""):
        self.step = step
        super().__init__(f"state diverged at step {step}" + (f": {detail}" if detail else ""))


@dataclass(frozen=True)
class VehicleParams:
    mass: float
    inertia: np.ndarray
    buoyancy: float | None = None
    gravity: float = DEFAULT_GRAVITY
    drag_coeff: np.ndarray = field(default_factory=lambda: np.ones(3))
    frontal_area: np.ndarray = field(default_factory=lambda: np.ones(3))
    air_density: float = DEFAULT_AIR_DENSITY
    rotational_damping: float = 0.0
    velocity_cap: float = 100.0

    def __post_init__(self):
        inertia = np.asarray(self.inertia, dtype=float)
        if inertia.ndim == 0:
            inertia = np.eye(3) * inertia
        elif inertia.shape == (3,):
            inertia = np.diag(inertia)
        object.__setattr__(self, "inertia", inertia)
        object.__setattr__(self, "drag_coeff", np.broadcast_to(np.asarray(self.drag_coeff, float), (3,)).copy())
        object.__setattr__(self, "frontal_area", np.broadcast_to(np.asarray(self.frontal_area, float), (3,)).copy())
        if self.buoyancy is None:
            object.__setattr__(self, "buoyancy", self.mass * self.gravity)
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if not np.allclose(inertia, inertia.T) or np.any(np.linalg.eigvalsh(inertia) <= 0):
            raise ValueError("inertia must be symmetric positive definite")
        if self.buoyancy < 0:
            raise ValueError("buoyancy must be non-negative")
        if self.air_density <= 0:
            raise ValueError("air density must be positive")

    @property
    def weight(self) -> float:
        return self.mass * self.gravity

    @property
    def neutrally_buoyant(self) -> bool:
        return abs(self.buoyancy - self.weight) < 1e-9 * self.weight

    @property
    def net_gravity(self) -> float:
        """Downward specific force left after buoyancy [m/s^2]."""
        return self.gravity - self.buoyancy / self.mass


@dataclass(frozen=True)
class PropellerConfig:
    """One rotor. ``arm_direction`` and ``thrust_direction`` are direction-angle
    triples; their cosines must form unit vectors in body axes."""

    lift_constant: float
    arm_length: float
    arm_direction: tuple[float, float, float]
    thrust_direction: tuple[float, float, float]
    torque_coefficient: float = 0.0
    spin_sign: int = 1

    def __post_init__(self):
        if self.lift_constant <= 0:
            raise ValueError("lift constant must be positive")
        if self.arm_length < 0:
            raise ValueError("arm length must be non-negative")
        if self.spin_sign not in (-1, 1):
            raise ValueError("spin_sign must be +1 or -1")
        for name in ("arm_direction", "thrust_direction"):
            cosines = np.cos(np.asarray(getattr(self, name), float))
            if abs(np.linalg.norm(cosines) - 1.0) > 1e-9:
                raise ValueError(f"{name} cosines are not a unit vector: {cosines}")

    @classmethod
    def from_vectors(cls, lift_constant, arm, thrust_axis, **kwargs):
        """Build from an arm vector (body axes, metres) and a thrust axis."""
        arm = np.asarray(arm, float)
        length = float(np.linalg.norm(arm))
        arm_dir = arm / length if length > 0 else np.array([1.0, 0.0, 0.0])
        axis = np.asarray(thrust_axis, float)
        axis = axis / np.linalg.norm(axis)
        return cls(
            lift_constant,
            length,
            tuple(np.arccos(np.clip(arm_dir, -1, 1))),
            tuple(np.arccos(np.clip(axis, -1, 1))),
            **kwargs,
        )


@dataclass(frozen=True)
class Wrench:
    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    moment: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __add__(self, other: "Wrench") -> "Wrench":
        return Wrench(np.add(self.force, other.force), np.add(self.moment, other.moment))


@dataclass(frozen=True)
class VehicleState:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angles: EulerAngles = field(default_factory=EulerAngles)
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def to_array(self) -> np.ndarray:
        return np.concatenate([
            np.asarray(self.position, float),
            self.angles.as_array(),
            np.asarray(self.velocity, float),
            np.asarray(self.omega, float),
        ])

    @classmethod
    def from_array(cls, y) -> "VehicleState":
        y = np.asarray(y, float)
        return cls(y[0:3].copy(), EulerAngles(*y[3:6]), y[6:9].copy(), y[9:12].copy())


@dataclass(frozen=True)
class LongitudinalState:
    x: float = 0.0
    z: float = 0.0
    theta: float = 0.0
    u: float = 0.0
    w: float = 0.0
    q: float = 0.0

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.z, self.theta, self.u, self.w, self.q])

    @classmethod
    def from_array(cls, y) -> "LongitudinalState":
        return cls(*(float(v) for v in y))


def thrust_wrench(propellers: Sequence[PropellerConfig], speeds) -> Wrench:
    """Body-frame force and moment from rotors spinning at ``speeds`` [rad/s].

    Each rotor makes ``f = k * omega**2`` along its thrust direction and a
    reaction torque ``spin_sign * torque_coefficient * omega**2`` about the
    same direction.
    """
    speeds = np.asarray(speeds, dtype=float)
    if len(propellers) != speeds.size:
        raise ValueError(f"{len(propellers)} propellers but {speeds.size} speeds")
    if np.any(speeds < 0):
        raise ValueError("propeller speeds must be non-negative")
    force = np.zeros(3)
    moment = np.zeros(3)
    for prop, w in zip(propellers, speeds):
        f = prop.lift_constant * w**2
        ca = np.cos(np.asarray(prop.thrust_direction, float))
        cb = prop.arm_length * np.cos(np.asarray(prop.arm_direction, float))
        torque = prop.spin_sign * prop.torque_coefficient * w**2
        force += f * ca
        moment += f * np.array([
            ca[1] * cb[2] + ca[2] * cb[1],
            ca[0] * cb[2] + ca[2] * cb[0],
            ca[0] * cb[1] + ca[1] * cb[0],
        ])
        moment += torque * ca
    return Wrench(force, moment)


def drag_force(velocity, params: VehicleParams) -> np.ndarray:
    v = np.asarray(velocity, float)
    return -0.5 * params.air_density * params.drag_coeff * params.frontal_area * v * np.abs(v)


def aero_wrench(state: VehicleState, params: VehicleParams) -> Wrench:
    """Per-axis quadratic drag plus optional linear rotational damping."""
    return Wrench(
        drag_force(state.velocity, params),
        -params.rotational_damping * np.asarray(state.omega, float),
    )


def state_derivative(state: VehicleState, wrench: Wrench, params: VehicleParams) -> np.ndarray:
    """Time derivative of ``state.to_array()``.

    ``wrench`` is the total applied body-frame wrench (thrust + aero); gravity
    and buoyancy are added here.
    """
    H = rotation_body_from_inertial(state.angles)
    v = np.asarray(state.velocity, float)
    w = np.asarray(state.omega, float)
    W = skew(w)
    g_eff = np.array([0.0, 0.0, params.net_gravity])
    v_dot = np.asarray(wrench.force, float) / params.mass + H @ g_eff - W @ v
    I = params.inertia
    w_dot = np.linalg.solve(I, np.asarray(wrench.moment, float) - W @ (I @ w))
    r_dot = H.T @ v
    phi_dot, theta_dot, psi_dot = euler_rates_from_body_rates(state.angles, w)
    return np.concatenate([r_dot, [psi_dot, theta_dot, phi_dot], v_dot, w_dot])


def longitudinal_rhs(y, fx, fz, moment, params: VehicleParams, include_drag: bool = True):
    """Vectorised vertical-plane dynamics.

    ``y`` has trailing axis ``(x, z, theta, u, w, q)`` and may carry any
    leading batch shape; ``fx``, ``fz`` and ``moment`` broadcast against it.
    """
    y = np.asarray(y, float)
    theta, u, w, q = y[..., 2], y[..., 3], y[..., 4], y[..., 5]
    s, c = np.sin(theta), np.cos(theta)
    m = params.mass
    g_net = params.net_gravity
    if include_drag:
        k = 0.5 * params.air_density * params.drag_coeff * params.frontal_area
        fx = fx - k[0] * u * np.abs(u)
        fz = fz - k[2] * w * np.abs(w)
    moment = moment - params.rotational_damping * q
    out = np.empty(np.broadcast_shapes(y.shape, np.shape(fx) + (6,)))
    out[..., 0] = u * c + w * s
    out[..., 1] = -u * s + w * c
    out[..., 2] = q
    out[..., 3] = fx / m - g_net * s - q * w
    out[..., 4] = fz / m + g_net * c + q * u
    out[..., 5] = moment / params.inertia[1, 1]
    return out


def longitudinal_derivative(state: LongitudinalState, force, moment: float, params: VehicleParams) -> np.ndarray:
    """Derivative of ``(x, z, theta, u, w, q)`` for a body-frame thrust ``force = (F_x, F_z)``.

    Per-axis drag is added from the state's body velocities.
    """
    y = state.to_array() if isinstance(state, LongitudinalState) else np.asarray(state, float)
    fx, fz = force
    return longitudinal_rhs(y, float(fx), float(fz), float(moment), params)


def mechanical_power(force, velocity, moment, omega) -> float:
    """Rate of work done by a wrench on a moving body, ``F.v + M.w`` [W]."""
    return float(np.dot(force, velocity) + np.dot(moment, omega))


def rk4_step(f: Callable[[float, np.ndarray], np.ndarray], t: float, y: np.ndarray, dt: float) -> np.ndarray:
    k1 = f(t, y)
    k2 = f(t + dt / 2, y + dt / 2 * k1)
    k3 = f(t + dt / 2, y + dt / 2 * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _check(y: np.ndarray, velocity: np.ndarray, cap: float, step: int):
    if not np.all(np.isfinite(y)):
        raise DivergenceError(step, "non-finite state")
    speed = float(np.linalg.norm(velocity))
    if speed > cap:
        raise DivergenceError(step, f"speed {speed:.6g} m/s exceeds cap {cap:g}")


def integrate_step(state, wrench_fn, params: VehicleParams, dt: float, t: float = 0.0, step: int = 0):
    """Advance ``state`` by one classical RK4 step.

    ``wrench_fn(t, state)`` returns the applied :class:`Wrench` (3-D) or a
    ``((F_x, F_z), M)`` pair (longitudinal) at each stage. Aerodynamic drag is
    added internally.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if isinstance(state, LongitudinalState):
        def f(tau, y):
            (fx, fz), m = wrench_fn(tau, LongitudinalState.from_array(y))
            return longitudinal_rhs(y, fx, fz, m, params)

        y = rk4_step(f, t, state.to_array(), dt)
        _check(y, y[3:5], params.velocity_cap, step)
        return LongitudinalState.from_array(y)

    def f(tau, y):
        s = VehicleState.from_array(y)
        total = wrench_fn(tau, s) + aero_wrench(s, params)
        return state_derivative(s, total, params)

    y = rk4_step(f, t, state.to_array(), dt)
    _check(y, y[6:9], params.velocity_cap, step)
    return VehicleState.from_array(y)


def with_mass(params: VehicleParams, mass: float) -> VehicleParams:
    """Copy with a new mass, keeping the vehicle neutrally buoyant if it was."""
    buoyancy = mass * params.gravity if params.neutrally_buoyant else params.buoyancy
    return replace(params, mass=mass, buoyancy=buoyancy)
