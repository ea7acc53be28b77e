"""Quick built-in oracle and property checks used by ``ddeif validate``."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .. import estimator as est
from .. import geometry as geo
from .. import sensor
from ..trajectory import TrajectoryConfig, reference, smootherstep_derivatives


def _rotations(rng: np.random.Generator) -> float:
    worst = 0.0
    for _ in range(200):
        roll, yaw = rng.uniform(-np.pi, np.pi, 2)
        pitch = rng.uniform(-1.5, 1.5)
        R = geo.dcm_body_to_inertial(roll, pitch, yaw)
        worst = max(worst, np.abs(R @ R.T - np.eye(3)).max(), abs(np.linalg.det(R) - 1.0))
        worst = max(worst, np.abs(geo.to_dcm(geo.from_euler(roll, pitch, yaw)) - R).max())
    return worst


def _quaternion_norm(rng: np.random.Generator) -> float:
    worst = 0.0
    for _ in range(200):
        a = geo.normalize(rng.standard_normal(4))
        b = geo.normalize(rng.standard_normal(4))
        worst = max(worst, abs(np.linalg.norm(geo.multiply(a, b)) - 1.0))
    return worst


def _smootherstep(rng: np.random.Generator) -> float:
    T = 10.0
    s0, d1, d2 = smootherstep_derivatives(0.0, T)
    s1, e1, e2 = smootherstep_derivatives(1.0, T)
    return max(abs(s0), abs(s1 - 1.0), abs(d1), abs(d2), abs(e1), abs(e2))


def _jacobian(rng: np.random.Generator) -> float:
    worst = 0.0
    h = 1e-6
    for _ in range(20):
        x = rng.standard_normal(est.STATE_DIM)
        x[3:7] = geo.normalize(x[3:7])
        u = rng.standard_normal(6)
        F = est.process_jacobian(x, u, 0.05)
        fd = np.empty_like(F)
        for j in range(est.STATE_DIM):
            d = np.zeros(est.STATE_DIM)
            d[j] = h
            fd[:, j] = (_euler_step(x + d, u) - _euler_step(x - d, u)) / (2 * h)
        worst = max(worst, np.abs(F - fd).max())
    return worst


def _euler_step(x: np.ndarray, u: np.ndarray, dt: float = 0.05) -> np.ndarray:
    out = x.copy()
    out[0:3] += dt * x[7:10]
    out[3:7] += 0.5 * dt * geo.omega_matrix(x[10:13]) @ x[3:7]
    out[7:10] += dt * u[0:3]
    out[10:13] += dt * u[3:6]
    return out


def _fusion_order(rng: np.random.Generator) -> float:
    noise = est.NoiseConfig()
    x = reference(12.0, TrajectoryConfig()).as_state()
    P = est.initial_covariance(x[3:7], noise, est.PriorConfig())
    prior = est.to_information(x, P)
    contribs = []
    for j in range(6):
        z_p = x[0:3] + rng.normal(0, 0.3, 3)
        z_q = geo.multiply(x[3:7], geo.from_euler(*rng.normal(0, 0.05, 3)))
        contribs.append(est.local_contribution(x, z_p, z_q, noise, agent=j))
    base, _ = est.fuse(prior, contribs)
    worst = 0.0
    for _ in range(20):
        perm = [contribs[i] for i in rng.permutation(len(contribs))]
        other, _ = est.fuse(prior, perm)
        worst = max(worst, np.abs(other.Y - base.Y).max(), np.abs(other.y - base.y).max())
    return worst


def _sensor_round_trip(rng: np.random.Generator) -> float:
    cam = sensor.CameraConfig()
    form = sensor.FormationConfig(splay=sensor.centering_splay(sensor.FormationConfig(), cam))
    worst = 0.0
    for _ in range(200):
        x = np.zeros(13)
        x[0:3] = rng.uniform(-5, 5, 3)
        x[3:7] = geo.from_euler(*rng.normal(0, 0.1, 2), rng.uniform(-np.pi, np.pi))
        for quad in sensor.quad_poses(x, 4, form, cam):
            d_C, q_CT = sensor.true_tag_in_camera(quad, x, cam)
            if not sensor.visible(d_C, cam):
                continue
            m = sensor.compose_measurement(d_C, q_CT, quad, cam)
            worst = max(worst, np.abs(m.z_p - x[0:3]).max(), geo.attitude_error(m.z_q, x[3:7]))
    return worst


CHECKS: list[tuple[str, Callable[[np.random.Generator], float], float]] = [
    ("rotation orthonormality", _rotations, 1e-12),
    ("quaternion norm preservation", _quaternion_norm, 1e-12),
    ("smootherstep endpoint derivatives", _smootherstep, 1e-12),
    ("process Jacobian vs finite differences", _jacobian, 1e-6),
    ("fusion order independence", _fusion_order, 1e-12),
    ("sensor round trip", _sensor_round_trip, 1e-10),
]


def run_checks(seed: int = 0) -> list[tuple[str, float, float, bool]]:
    rng = np.random.default_rng(seed)
    results = []
    for name, fn, tol in CHECKS:
        value = float(fn(rng))
        results.append((name, value, tol, bool(value < tol)))
    return results
