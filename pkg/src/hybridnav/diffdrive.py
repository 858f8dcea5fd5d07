"""Differential-drive adapter and unicycle kinematics (planar only)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def wrap_angle(a):
    """Wrap to ``(-pi, pi]``; an exact reversal maps to ``+pi``."""
    w = np.remainder(np.asarray(a, dtype=float) + np.pi, 2 * np.pi) - np.pi
    w = np.where(w <= -np.pi, w + 2 * np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


@dataclass(frozen=True)
class DriveParams:
    v_max: float = 0.31
    omega_max: float = 1.9
    k_v: float = 0.1
    p: int = 1

    def __post_init__(self):
        if not (self.v_max > 0 and self.omega_max > 0 and self.k_v > 0):
            raise ValueError("v_max, omega_max and k_v must be positive")
        if int(self.p) != self.p or self.p < 1:
            raise ValueError("p must be an integer >= 1")


@dataclass(frozen=True)
class UnicycleState:
    x: np.ndarray
    phi: float

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.shape != (2,):
            raise ValueError("unicycle position must be planar")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "phi", wrap_angle(self.phi))


def adapt(u, phi, params: DriveParams = DriveParams()):
    """Map a planar velocity command to forward and turn rates ``(v, omega)``.

    Vectorized over leading axes of ``u`` (shape ``(..., 2)``) and ``phi``.
    """
    u = np.asarray(u, dtype=float)
    speed = np.hypot(u[..., 0], u[..., 1])
    dphi = wrap_angle(np.arctan2(u[..., 1], u[..., 0]) - phi)
    half = np.asarray(dphi) / 2.0
    v = np.minimum(params.v_max, params.k_v * speed * np.cos(half) ** (2 * params.p))
    w = params.omega_max * np.sin(half)
    zero = speed == 0
    v = np.where(zero, 0.0, v)
    w = np.where(zero, 0.0, w)
    if np.ndim(v) == 0:
        return float(v), float(w)
    return v, w


def _rhs(phi, v, w):
    return v * math.cos(phi), v * math.sin(phi), w


def unicycle_step(state: UnicycleState, v: float, omega: float, dt: float) -> UnicycleState:
    """One RK4 step of ``x' = v (cos phi, sin phi)``, ``phi' = omega``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    phi = state.phi
    k1 = _rhs(phi, v, omega)
    k2 = _rhs(phi + 0.5 * dt * k1[2], v, omega)
    k3 = _rhs(phi + 0.5 * dt * k2[2], v, omega)
    k4 = _rhs(phi + dt * k3[2], v, omega)
    inc = [dt / 6.0 * (a + 2 * b + 2 * c + d) for a, b, c, d in zip(k1, k2, k3, k4)]
    return UnicycleState(state.x + np.array(inc[:2]), phi + inc[2])
