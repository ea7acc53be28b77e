"""Reference trajectories: pirouetting circle, Lissajous figure-8 and hover.

Both moving trajectories are parameterized by a *ramped time* ``w(t)`` whose
rate is the quintic smootherstep, ``dw/dt = S(t / T)``. Because the ramp acts
on the phase rather than the output, velocity and acceleration follow from
the chain rule and stay exact derivatives of position.
"""

from __future__ import annotations

import math

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .geometry import yaw_quat

TWO_PI = 2.0 * np.pi


@dataclass
class TrajectoryConfig:
    kind: Literal["pirouette", "lissajous", "hover"] = "pirouette"
    center: tuple[float, float, float] = (0.0, 2.5, -3.0)
    radius: float = 2.5
    speed: float = 0.5
    # +1 counter-clockwise seen from above (yaw increasing), -1 clockwise
    direction: int = 1
    start_angle: float = -np.pi / 2
    f_n: float = 0.04
    f_e: float = 0.02
    amp_n: float = 4.0
    amp_e: float = 4.0
    amp_d: float = 0.5
    ramp: float = 10.0

    def __post_init__(self) -> None:
        self.center = tuple(float(c) for c in self.center)
        if self.ramp <= 0.0:
            raise ValueError("ramp duration must be positive")
        if self.kind == "pirouette" and self.radius <= 0.0:
            raise ValueError("pirouette radius must be positive")
        if self.kind == "lissajous" and (self.f_n <= 0.0 or self.f_e <= 0.0):
            raise ValueError("lissajous frequencies must be positive")
        if self.kind not in ("pirouette", "lissajous", "hover"):
            raise ValueError(f"unknown trajectory kind {self.kind!r}")


@dataclass
class ReferenceState:
    position: np.ndarray
    attitude: np.ndarray
    velocity: np.ndarray
    rates: np.ndarray
    accel: np.ndarray
    ang_accel: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @property
    def feedforward(self) -> np.ndarray:
        """The 6-element control input ``[accel, ang_accel]``."""
        return np.concatenate([self.accel, self.ang_accel])

    def as_state(self) -> np.ndarray:
        """13-element payload state matching this reference."""
        return np.concatenate([self.position, self.attitude, self.velocity, self.rates])


def smootherstep(t: float, T: float) -> float:
    """Quintic ramp ``6u⁵ - 15u⁴ + 10u³`` with ``u = clamp(t/T, 0, 1)``."""
    if T <= 0.0:
        raise ValueError("ramp duration must be positive")
    u = min(max(t / T, 0.0), 1.0)
    return u * u * u * (u * (6.0 * u - 15.0) + 10.0)


def ramp_profile(t: float, T: float) -> tuple[float, float, float, float]:
    """Ramped time and its first three time derivatives ``(w, w', w'', w''')``."""
    if t <= 0.0:
        return 0.0, 0.0, 0.0, 0.0
    if t >= T:
        return t - 0.5 * T, 1.0, 0.0, 0.0
    u = t / T
    w = T * u**4 * (u * (u - 3.0) + 2.5)
    s1, s2, s3 = smootherstep_derivatives(u, T)
    return w, s1, s2, s3


def smootherstep_derivatives(u: float, T: float) -> tuple[float, float, float]:
    """Smootherstep and its first two time derivatives at ``u = t/T`` (no clamping)."""
    s0 = u**3 * (u * (6.0 * u - 15.0) + 10.0)
    s1 = 30.0 * u**2 * (u - 1.0) ** 2 / T
    s2 = 60.0 * u * (2.0 * u * u - 3.0 * u + 1.0) / T**2
    return s0, s1, s2


def pirouette_reference(t: float, cfg: TrajectoryConfig) -> ReferenceState:
    """Circle in the North-East plane with yaw along the tangent.

    The payload keeps one side wall facing the circle center, like a bicycle
    riding the circle.
    """
    w, w1, w2, w3 = ramp_profile(t, cfg.ramp)
    rate = cfg.direction * cfg.speed / cfg.radius
    phi = cfg.start_angle + rate * w
    phi1, phi2, phi3 = rate * w1, rate * w2, rate * w3
    c, s = math.cos(phi), math.sin(phi)
    r = cfg.radius
    cn, ce, cd = cfg.center
    position = np.array([cn + r * c, ce + r * s, cd])
    velocity = np.array([-r * s * phi1, r * c * phi1, 0.0])
    accel = np.array(
        [-r * c * phi1**2 - r * s * phi2, -r * s * phi1**2 + r * c * phi2, 0.0]
    )
    yaw = phi + cfg.direction * 0.5 * np.pi
    return ReferenceState(
        position=position,
        attitude=yaw_quat(yaw),
        velocity=velocity,
        rates=np.array([0.0, 0.0, phi1]),
        accel=accel,
        ang_accel=np.array([0.0, 0.0, phi2]),
    )


def _lissajous_path(w: float, cfg: TrajectoryConfig) -> np.ndarray:
    """Position and its derivatives w.r.t. ramped time, shape (4, 3)."""
    out = np.zeros((4, 3))
    for axis, (amp, freq) in enumerate(((cfg.amp_n, cfg.f_n), (cfg.amp_e, cfg.f_e), (cfg.amp_d, cfg.f_n))):
        om = TWO_PI * freq
        s, c = math.sin(om * w), math.cos(om * w)
        out[0, axis] = amp * s
        out[1, axis] = amp * om * c
        out[2, axis] = -amp * om**2 * s
        out[3, axis] = -amp * om**3 * c
    out[0] += np.asarray(cfg.center)
    return out


def lissajous_reference(t: float, cfg: TrajectoryConfig) -> ReferenceState:
    """Figure-8 with a vertical oscillation at the north frequency.

    Yaw follows the horizontal direction of travel. It is taken from the path
    tangent with respect to ramped time, so it is defined even at rest. The
    heading is reported in [0, 2π): for the figure-8 (``f_n = 2 f_e``) the
    heading never points due north, so this branch is continuous.
    """
    w, w1, w2, w3 = ramp_profile(t, cfg.ramp)
    p0, p1, p2, p3 = _lissajous_path(w, cfg)
    position = p0
    velocity = p1 * w1
    accel = p2 * w1**2 + p1 * w2

    n1, e1 = p1[0], p1[1]
    n2, e2 = p2[0], p2[1]
    n3, e3 = p3[0], p3[1]
    yaw = math.atan2(e1, n1) % TWO_PI
    # heading derivatives w.r.t. ramped time
    a = n1 * e2 - e1 * n2
    b = n1 * n1 + e1 * e1
    da = n1 * e3 - e1 * n3
    db = 2.0 * (n1 * n2 + e1 * e2)
    psi1 = a / b
    psi2 = (da * b - a * db) / (b * b)
    yaw_rate = psi1 * w1
    yaw_accel = psi2 * w1**2 + psi1 * w2
    return ReferenceState(
        position=position,
        attitude=yaw_quat(yaw),
        velocity=velocity,
        rates=np.array([0.0, 0.0, yaw_rate]),
        accel=accel,
        ang_accel=np.array([0.0, 0.0, yaw_accel]),
    )


def hover_reference(t: float, cfg: TrajectoryConfig) -> ReferenceState:
    return ReferenceState(
        position=np.asarray(cfg.center, dtype=float).copy(),
        attitude=yaw_quat(0.0),
        velocity=np.zeros(3),
        rates=np.zeros(3),
        accel=np.zeros(3),
        ang_accel=np.zeros(3),
    )


def feedforward_table(ts: np.ndarray, cfg: TrajectoryConfig) -> np.ndarray:
    """Feed-forward ``[accel, ang_accel]`` at many times at once, shape ``(n, 6)``.

    Vectorized twin of ``reference(t, cfg).feedforward`` for the truth
    integrator, which needs it on every RK4 stage.
    """
    t = np.asarray(ts, dtype=float)
    out = np.zeros((t.size, 6))
    if cfg.kind == "hover":
        return out
    T = cfg.ramp
    u = np.clip(t / T, 0.0, 1.0)
    inside = (t > 0.0) & (t < T)
    w = np.where(t >= T, t - 0.5 * T, T * u**4 * (u * (u - 3.0) + 2.5))
    w1 = u**3 * (u * (6.0 * u - 15.0) + 10.0)
    w2 = np.where(inside, 30.0 * u**2 * (u - 1.0) ** 2 / T, 0.0)
    if cfg.kind == "pirouette":
        rate = cfg.direction * cfg.speed / cfg.radius
        phi = cfg.start_angle + rate * w
        phi1, phi2 = rate * w1, rate * w2
        c, s = np.cos(phi), np.sin(phi)
        r = cfg.radius
        out[:, 0] = -r * c * phi1**2 - r * s * phi2
        out[:, 1] = -r * s * phi1**2 + r * c * phi2
        out[:, 5] = phi2
        return out
    d = {}
    for axis, (amp, freq) in enumerate(((cfg.amp_n, cfg.f_n), (cfg.amp_e, cfg.f_e), (cfg.amp_d, cfg.f_n))):
        om = TWO_PI * freq
        sn, cs = np.sin(om * w), np.cos(om * w)
        p1, p2, p3 = amp * om * cs, -amp * om**2 * sn, -amp * om**3 * cs
        out[:, axis] = p2 * w1**2 + p1 * w2
        d[axis] = (p1, p2, p3)
    (n1, n2, n3), (e1, e2, e3) = d[0], d[1]
    a = n1 * e2 - e1 * n2
    b = n1 * n1 + e1 * e1
    da = n1 * e3 - e1 * n3
    db = 2.0 * (n1 * n2 + e1 * e2)
    out[:, 5] = (da * b - a * db) / (b * b) * w1**2 + a / b * w2
    return out


def reference(t: float, cfg: TrajectoryConfig) -> ReferenceState:
    if cfg.kind == "pirouette":
        return pirouette_reference(t, cfg)
    if cfg.kind == "lissajous":
        return lissajous_reference(t, cfg)
    return hover_reference(t, cfg)
