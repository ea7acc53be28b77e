"""Synthetic fiducial-marker camera and the quadrotor formation carrying it.

The tag pose is computed exactly in each camera frame, gated by field of
view and range, and then pushed back through the camera mount and the
quadrotor pose into an inertial payload measurement. Noise is added in the
inertial measurement space.
"""

from __future__ import annotations

import math

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from . import geometry as geo
from .dynamics import POS, QUAT


@dataclass
class CameraConfig:
    alpha: float = 1.1
    mount_offset: tuple[float, float, float] = (0.0, 0.0, 0.05)
    fov: float = 1.5
    max_range: float = 6.0
    # tag center in the payload frame; top face of a 0.25 m cube (NED, up is -z)
    tag_offset: tuple[float, float, float] = (0.0, 0.0, -0.125)

    def __post_init__(self) -> None:
        self.mount_offset = tuple(float(v) for v in self.mount_offset)
        self.tag_offset = tuple(float(v) for v in self.tag_offset)
        if not 0.0 < self.fov < np.pi:
            raise ValueError("fov must lie in (0, pi)")
        if self.max_range <= 0.0:
            raise ValueError("max_range must be positive")


@dataclass
class FormationConfig:
    """Kinematic formation: one quadrotor per top corner of the payload.

    Each quadrotor sits at the end of a taut cable of ``cable_length``
    leaning ``splay`` rad outward from vertical, and yaws to face the payload.
    ``splay=None`` picks the lean that puts the tag on the camera axis.
    """

    cable_length: float = 2.0
    payload_size: float = 0.25
    splay: Optional[float] = None
    jitter_pos: float = 0.0
    jitter_yaw: float = 0.0

    def __post_init__(self) -> None:
        if self.cable_length <= 0.0 or self.payload_size <= 0.0:
            raise ValueError("cable_length and payload_size must be positive")


@dataclass
class QuadPose:
    position: np.ndarray
    attitude: np.ndarray


@dataclass
class Measurement:
    agent: int
    t: float
    valid: bool
    z_p: Optional[np.ndarray] = None
    z_q: Optional[np.ndarray] = None

    @classmethod
    def missing(cls, agent: int, t: float) -> "Measurement":
        return cls(agent=agent, t=t, valid=False)


def centering_splay(formation: FormationConfig, cam: CameraConfig) -> float:
    """Cable lean that puts the tag center on the optical axis (level payload)."""
    half = 0.5 * formation.payload_size
    corner_r = half * np.sqrt(2.0)
    L = formation.cable_length
    tag_up = -cam.tag_offset[2]

    def miss(beta: float) -> float:
        horiz = corner_r + L * np.sin(beta)
        # camera sits mount_offset[2] below the quad; corner is half above CG
        drop = L * np.cos(beta) + half - tag_up - cam.mount_offset[2]
        return np.arctan2(horiz, drop) - cam.alpha

    return float(brentq(miss, 0.0, 0.5 * np.pi - 1e-6))


def quad_poses(
    payload: np.ndarray,
    n_agents: int,
    formation: FormationConfig,
    cam: CameraConfig,
    rng: Optional[Sequence[np.random.Generator]] = None,
) -> list[QuadPose]:
    """Quadrotor poses for a payload state; they follow the payload's yaw.

    ``rng`` (one generator per agent) is only drawn from when jitter is on.
    """
    splay = formation.splay if formation.splay is not None else centering_splay(formation, cam)
    yaw = geo.to_euler(payload[QUAT])[2]
    half = 0.5 * formation.payload_size
    corner_r = half * np.sqrt(2.0)
    L = formation.cable_length
    poses = []
    for j in range(n_agents):
        gamma = yaw + 0.25 * np.pi + j * 2.0 * np.pi / n_agents
        out = np.array([np.cos(gamma), np.sin(gamma), 0.0])
        position = payload[POS] + (corner_r + L * np.sin(splay)) * out
        position[2] += -half - L * np.cos(splay)
        quad_yaw = gamma + np.pi
        if rng is not None and (formation.jitter_pos > 0.0 or formation.jitter_yaw > 0.0):
            position = position + rng[j].normal(0.0, formation.jitter_pos, 3)
            quad_yaw += rng[j].normal(0.0, formation.jitter_yaw)
        poses.append(QuadPose(position=position, attitude=geo.yaw_quat(quad_yaw)))
    return poses


def true_tag_in_camera(quad: QuadPose, payload: np.ndarray, cam: CameraConfig) -> tuple[np.ndarray, np.ndarray]:
    """Tag position ``d_C`` and attitude quaternion in the camera frame.

    The tag frame is taken parallel to the payload body frame.
    """
    R_ND = geo.to_dcm(quad.attitude)
    R_DC = geo.rotation_camera_to_body(cam.alpha)
    R_NP = geo.to_dcm(payload[QUAT])
    p_tag = payload[POS] + R_NP @ np.asarray(cam.tag_offset)
    d_C = R_DC.T @ (R_ND.T @ (p_tag - quad.position) - np.asarray(cam.mount_offset))
    R_CT = R_DC.T @ R_ND.T @ R_NP
    return d_C, geo.from_dcm(R_CT)


def visible(d_C: np.ndarray, cam: CameraConfig) -> bool:
    x, y, z = np.asarray(d_C, dtype=float).tolist()
    rng_ = math.sqrt(x * x + y * y + z * z)
    if z <= 0.0 or rng_ >= cam.max_range:
        return False
    return math.acos(min(1.0, z / rng_)) < 0.5 * cam.fov


def compose_measurement(
    d_C: np.ndarray,
    tag_att_C: np.ndarray,
    quad: QuadPose,
    cam: CameraConfig,
    rng: Optional[np.random.Generator] = None,
    r_diag: Optional[Sequence[float]] = None,
    agent: int = 0,
    t: float = 0.0,
) -> Measurement:
    """Inertial payload pose from a camera-frame tag detection.

    Position: ``z_tag = R_ND (R_DC d_C + c_D) + r_N``, then the tag-to-CG
    offset is removed using the composed attitude. With ``rng`` and ``r_diag``
    given, Gaussian noise is added: position noise in the inertial frame and a
    small Euler-angle rotation applied on the body side of ``z_q``.
    """
    if not visible(d_C, cam):
        raise ValueError("compose_measurement called for a tag outside the camera view")
    R_ND = geo.to_dcm(quad.attitude)
    R_DC = geo.rotation_camera_to_body(cam.alpha)
    z_tag = R_ND @ (R_DC @ d_C + np.asarray(cam.mount_offset)) + quad.position
    R_NP = R_ND @ R_DC @ geo.to_dcm(tag_att_C)
    z_q = geo.from_dcm(R_NP)
    z_p = z_tag - R_NP @ np.asarray(cam.tag_offset)
    m = Measurement(agent=agent, t=t, valid=True, z_p=z_p, z_q=z_q)
    if rng is not None and r_diag is not None:
        _perturb(m, rng.standard_normal(6), r_diag)
    return m


def sense(
    agent: int,
    t: float,
    quad: QuadPose,
    payload: np.ndarray,
    cam: CameraConfig,
    rng: np.random.Generator,
    r_diag: Optional[Sequence[float]],
    dropout: float = 0.0,
) -> Measurement:
    """Full detection pipeline for one agent at one tick.

    The generator is advanced by the same amount whether or not the tag is
    seen, so a detection miss never shifts later noise draws.
    """
    miss_draw = rng.uniform()
    draws = rng.standard_normal(6)
    d_C, q_CT = true_tag_in_camera(quad, payload, cam)
    if not visible(d_C, cam) or miss_draw < dropout:
        return Measurement.missing(agent, t)
    m = compose_measurement(d_C, q_CT, quad, cam, agent=agent, t=t)
    if r_diag is not None:
        _perturb(m, draws, r_diag)
    return m


def _perturb(m: Measurement, draws: np.ndarray, r_diag: Sequence[float]) -> None:
    sd = np.sqrt(np.asarray(r_diag, dtype=float))
    m.z_p = m.z_p + draws[:3] * sd[:3]
    m.z_q = geo.normalize(geo.multiply(m.z_q, geo.from_euler(*(draws[3:6] * sd[3:6]))))
