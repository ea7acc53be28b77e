"""Ground-truth payload propagation.

The truth model is the same kinematic double integrator the estimator uses,
integrated with classic RK4 at the physics rate, plus a planar disturbance
force that only the truth sees.

State layout (13): ``[n, e, d, qw, qx, qy, qz, vn, ve, vd, P, Q, R]``.
Input layout (6): ``[vn_dot, ve_dot, vd_dot, P_dot, Q_dot, R_dot]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .geometry import normalize

STATE_DIM = 13
INPUT_DIM = 6

POS = slice(0, 3)
QUAT = slice(3, 7)
VEL = slice(7, 10)
RATES = slice(10, 13)

InputLike = Union[np.ndarray, Callable[[float], np.ndarray]]


@dataclass
class DisturbanceModel:
    sigma_force: float = 0.227
    payload_mass: float = 1.2
    hold: float = 0.05

    def __post_init__(self) -> None:
        if self.sigma_force < 0.0:
            raise ValueError("sigma_force must be non-negative")
        if self.payload_mass <= 0.0:
            raise ValueError("payload_mass must be positive")
        if self.hold <= 0.0:
            raise ValueError("hold interval must be positive")


def payload_derivative(x: np.ndarray, u: np.ndarray, f_dist: np.ndarray, mass: float = 1.2) -> np.ndarray:
    """Continuous-time state derivative of the payload."""
    _, _, _, qw, qx, qy, qz, vn, ve, vd, p, q, r = np.asarray(x, dtype=float).tolist()
    u0, u1, u2, u3, u4, u5 = np.asarray(u, dtype=float).tolist()
    fn, fe, fd = np.asarray(f_dist, dtype=float).tolist()
    return np.array(
        [
            vn,
            ve,
            vd,
            0.5 * (-p * qx - q * qy - r * qz),
            0.5 * (p * qw + r * qy - q * qz),
            0.5 * (q * qw - r * qx + p * qz),
            0.5 * (r * qw + q * qx - p * qy),
            u0 + fn / mass,
            u1 + fe / mass,
            u2 + fd / mass,
            u3,
            u4,
            u5,
        ]
    )


def step_truth(
    x: np.ndarray,
    u: InputLike,
    f_dist: np.ndarray,
    dt: float,
    t: float = 0.0,
    mass: float = 1.2,
) -> np.ndarray:
    """One RK4 step followed by quaternion renormalization.

    ``u`` is either a fixed input or a callable ``u(time)``; a callable is
    sampled at the RK4 stage times ``t``, ``t + dt/2`` and ``t + dt``.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if callable(u):
        u0, um, u1 = u(t), u(t + 0.5 * dt), u(t + dt)
    else:
        u0 = um = u1 = u
    # plain-float RK4: the state is tiny, so numpy call overhead would dominate
    f = [v / mass for v in np.asarray(f_dist, dtype=float).tolist()]
    a0, am, a1 = (np.asarray(v, dtype=float).tolist() for v in (u0, um, u1))
    x0 = np.asarray(x, dtype=float).tolist()
    k1 = _rate(x0, a0, f)
    k2 = _rate([xi + 0.5 * dt * ki for xi, ki in zip(x0, k1)], am, f)
    k3 = _rate([xi + 0.5 * dt * ki for xi, ki in zip(x0, k2)], am, f)
    k4 = _rate([xi + dt * ki for xi, ki in zip(x0, k3)], a1, f)
    h6 = dt / 6.0
    out = np.array([xi + h6 * (b1 + 2.0 * b2 + 2.0 * b3 + b4) for xi, b1, b2, b3, b4 in zip(x0, k1, k2, k3, k4)])
    out[QUAT] = normalize(out[QUAT])
    return out


def _rate(x: list, u: list, f: list) -> list:
    """List version of :func:`payload_derivative` with ``f`` already divided by mass."""
    _, _, _, qw, qx, qy, qz, vn, ve, vd, p, q, r = x
    return [
        vn,
        ve,
        vd,
        0.5 * (-p * qx - q * qy - r * qz),
        0.5 * (p * qw + r * qy - q * qz),
        0.5 * (q * qw - r * qx + p * qz),
        0.5 * (r * qw + q * qx - p * qy),
        u[0] + f[0],
        u[1] + f[1],
        u[2] + f[2],
        u[3],
        u[4],
        u[5],
    ]


def sample_disturbance(rng: np.random.Generator, model: DisturbanceModel) -> np.ndarray:
    """Planar force with Gaussian magnitude and uniformly random heading (N)."""
    if model.sigma_force == 0.0:
        return np.zeros(3)
    magnitude = rng.normal(0.0, model.sigma_force)
    heading = rng.uniform(0.0, 2.0 * np.pi)
    return np.array([magnitude * np.cos(heading), magnitude * np.sin(heading), 0.0])


class HeldDisturbance:
    """Disturbance force resampled at the start of every hold interval."""

    def __init__(self, rng: np.random.Generator, model: DisturbanceModel):
        self.rng = rng
        self.model = model
        self._index = -1
        self._force = np.zeros(3)

    def at(self, t: float) -> np.ndarray:
        # small guard so t = k * hold lands in interval k despite rounding
        index = int(np.floor(t / self.model.hold + 1e-9))
        while self._index < index:
            self._force = sample_disturbance(self.rng, self.model)
            self._index += 1
        return self._force
