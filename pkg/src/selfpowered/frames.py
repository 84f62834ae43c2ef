"""Euler-angle attitude kinematics for a 3-2-1 (yaw, pitch, roll) sequence.

Angles are never wrapped; integrators carry them unwrapped and any
wrapping is left to display code.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: Half-width of the refused band around pitch = +/- pi/2 [rad].
SINGULARITY_EPS = 1e-6


class GimbalLockError(ValueError):
    """Raised when the Euler-rate transform is requested too close to pitch = +/- 90 deg."""


@dataclass(frozen=True)
class EulerAngles:
    psi: float = 0.0
    theta: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite([self.psi, self.theta, self.phi])):
            raise ValueError(f"non-finite Euler angles: {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.psi, self.theta, self.phi])


def _angles(angles) -> tuple[float, float, float]:
    if isinstance(angles, EulerAngles):
        return angles.psi, angles.theta, angles.phi
    psi, theta, phi = (float(a) for a in angles)
    if not np.all(np.isfinite([psi, theta, phi])):
        raise ValueError(f"non-finite Euler angles: {(psi, theta, phi)}")
    return psi, theta, phi


def _finite3(vec, what: str) -> np.ndarray:
    arr = np.asarray(vec, dtype=float).reshape(3)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite {what}: {arr}")
    return arr


def yaw_matrix(psi: float) -> np.ndarray:
    c, s = np.cos(psi), np.sin(psi)
    return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])


def pitch_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def roll_matrix(phi: float) -> np.ndarray:
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])


def rotation_body_from_inertial(angles) -> np.ndarray:
    """Direction-cosine matrix taking inertial-frame vectors into the body frame.

    Built as ``roll(phi) @ pitch(theta) @ yaw(psi)``. The inverse (body to
    inertial) is the transpose.
    """
    psi, theta, phi = _angles(angles)
    sps, cps = np.sin(psi), np.cos(psi)
    sth, cth = np.sin(theta), np.cos(theta)
    sph, cph = np.sin(phi), np.cos(phi)
    return np.array([
        [cth * cps, cth * sps, -sth],
        [sph * sth * cps - cph * sps, sph * sth * sps + cph * cps, sph * cth],
        [cph * sth * cps + sph * sps, cph * sth * sps - sph * cps, cph * cth],
    ])


def rotation_inertial_from_body(angles) -> np.ndarray:
    return rotation_body_from_inertial(angles).T


def body_rates_from_euler_rates(angles, euler_rates) -> np.ndarray:
    """Map Euler-angle rates ``(phi_dot, theta_dot, psi_dot)`` to body rates ``(p, q, r)``."""
    _, theta, phi = _angles(angles)
    rates = _finite3(euler_rates, "Euler rates")
    sth, cth = np.sin(theta), np.cos(theta)
    sph, cph = np.sin(phi), np.cos(phi)
    L = np.array([
        [1.0, 0.0, -sth],
        [0.0, cph, sph * cth],
        [0.0, -sph, cph * cth],
    ])
    return L @ rates


def euler_rates_from_body_rates(angles, rates) -> np.ndarray:
    """Map body rates ``(p, q, r)`` to Euler-angle rates ``(phi_dot, theta_dot, psi_dot)``.

    Raises GimbalLockError when ``|theta|`` is within SINGULARITY_EPS of pi/2.
    """
    _, theta, phi = _angles(angles)
    pqr = _finite3(rates, "body rates")
    if abs(abs(theta) - np.pi / 2) < SINGULARITY_EPS or abs(theta) > np.pi / 2:
        raise GimbalLockError(f"pitch {theta!r} rad is in the gimbal-lock region")
    sph, cph = np.sin(phi), np.cos(phi)
    tth, cth = np.tan(theta), np.cos(theta)
    L = np.array([
        [1.0, sph * tth, cph * tth],
        [0.0, cph, -sph],
        [0.0, sph / cth, cph / cth],
    ])
    return L @ pqr


def skew(omega) -> np.ndarray:
    """Cross-product matrix: ``skew(w) @ v == np.cross(w, v)``."""
    wx, wy, wz = _finite3(omega, "angular velocity")
    return np.array([
        [0.0, -wz, wy],
        [wz, 0.0, -wx],
        [-wy, wx, 0.0],
    ])
