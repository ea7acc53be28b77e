"""PD surrogate for the load-leading payload controller.

The controller commands payload linear and angular accelerations directly:
reference feed-forward plus PD feedback on the tracking error, clipped
per component.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .dynamics import POS, QUAT, RATES, VEL
from .trajectory import ReferenceState


@dataclass
class ControllerGains:
    kp_pos: float = 2.0
    kd_pos: float = 2.8
    kp_att: float = 4.0
    kd_att: float = 4.0
    max_accel: float = 5.0
    max_ang_accel: float = 5.0

    def __post_init__(self) -> None:
        if min(self.kp_pos, self.kd_pos, self.kp_att, self.kd_att) < 0.0:
            raise ValueError("controller gains must be non-negative")
        if self.max_accel <= 0.0 or self.max_ang_accel <= 0.0:
            raise ValueError("saturation limits must be positive")


def attitude_error_vector(q: np.ndarray, q_ref: np.ndarray) -> np.ndarray:
    """Body-frame rotation vector (small-angle) taking ``q`` to ``q_ref``."""
    q_err = geo.canonicalize(geo.multiply(geo.conjugate(q), q_ref))
    return 2.0 * q_err[1:]


def compute_input(x_est: np.ndarray, ref: ReferenceState, gains: ControllerGains) -> np.ndarray:
    lin = (
        ref.accel
        + gains.kp_pos * (ref.position - x_est[POS])
        + gains.kd_pos * (ref.velocity - x_est[VEL])
    )
    ang = (
        ref.ang_accel
        + gains.kp_att * attitude_error_vector(x_est[QUAT], ref.attitude)
        + gains.kd_att * (ref.rates - x_est[RATES])
    )
    return np.concatenate(
        [np.clip(lin, -gains.max_accel, gains.max_accel), np.clip(ang, -gains.max_ang_accel, gains.max_ang_accel)]
    )
