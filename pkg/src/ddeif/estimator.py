"""Decentralized extended information filter for the payload state.

Each agent carries its belief in information form, ``Y = P⁻¹`` and
``y = P⁻¹ x``. Prediction goes through covariance form; the measurement
update is a plain sum of per-agent contributions ``(i, I)``, which is what
makes the filter decentralized: every agent can add whatever contributions
reached it this step, starting with its own.

A covariance-form EKF with the same models (:func:`ekf_oracle_step`) lives
here as well; it is the algebraic reference the information filter is
checked against.
"""

from __future__ import annotations

import functools
import struct
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

from . import geometry as geo
from .dynamics import INPUT_DIM, POS, QUAT, RATES, STATE_DIM, VEL

MEAS_DIM = 7
MAX_CONDITION = 1e12

# Measurement selector: h(x) = [position; quaternion]
H = np.zeros((MEAS_DIM, STATE_DIM))
H[0:3, 0:3] = np.eye(3)
H[3:7, 3:7] = np.eye(4)


class FilterDivergence(RuntimeError):
    """Raised when an information/covariance matrix can no longer be inverted safely."""


@dataclass(frozen=True)
class InformationPair:
    y: np.ndarray
    Y: np.ndarray


@dataclass(frozen=True)
class Contribution:
    i: np.ndarray
    I: np.ndarray
    agent: int = 0
    k: int = 0

    def is_finite(self) -> bool:
        return self._finite

    @functools.cached_property
    def _finite(self) -> bool:
        # checked by every receiver; contributions are immutable, so once is enough
        return bool(np.isfinite(self.i).all() and np.isfinite(self.I).all())


@dataclass
class NoiseConfig:
    """Process and measurement noise.

    ``q_diag`` holds the variances of the six acceleration channels
    ``[vn_dot, ve_dot, vd_dot, P_dot, Q_dot, R_dot]``; ``r_diag`` holds the
    position variances (m²) followed by roll/pitch/yaw variances (rad²).
    """

    q_diag: Sequence[float] = (0.0625, 0.0625, 0.0625, 7.84, 7.84, 7.84)
    r_diag: Sequence[float] = (0.12, 0.12, 0.12, 0.0027, 0.0027, 0.0027)
    # Lift of the rank-3 attitude block along the quaternion-norm direction.
    # Must be comparable to the norm-direction spread of a noisy unit
    # quaternion (~1e-6 for 0.0027 rad²); 1e-12 destroys the filter numerically.
    eps: float = 1e-6
    max_condition: float = MAX_CONDITION

    def __post_init__(self) -> None:
        self.q_diag = tuple(float(v) for v in self.q_diag)
        self.r_diag = tuple(float(v) for v in self.r_diag)
        if len(self.q_diag) != INPUT_DIM or len(self.r_diag) != 6:
            raise ValueError("q_diag needs 6 entries and r_diag needs 6 entries")
        if min(self.q_diag) < 0.0 or min(self.r_diag) <= 0.0:
            raise ValueError("noise variances must be non-negative (R strictly positive)")

    @property
    def Q(self) -> np.ndarray:
        return np.diag(self.q_diag)

    @property
    def R_pos(self) -> np.ndarray:
        return np.diag(self.r_diag[:3])

    @property
    def R_euler(self) -> np.ndarray:
        return np.diag(self.r_diag[3:])

    def R(self, q_ref: np.ndarray) -> np.ndarray:
        """7x7 measurement covariance with the attitude block mapped at ``q_ref``."""
        R = np.zeros((MEAS_DIM, MEAS_DIM))
        R[0:3, 0:3] = self.R_pos
        R[3:7, 3:7] = geo.map_euler_cov(q_ref, self.R_euler, self.eps)
        return R

    def R_inverse(self, q_ref: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`R`, built block by block."""
        R_inv = np.zeros((MEAS_DIM, MEAS_DIM))
        R_inv[0:3, 0:3] = np.diag([1.0 / v for v in self.r_diag[:3]])
        # [q, xi(q)] is orthogonal for unit q, so the quaternion block
        # q q^T eps + xi diag(s/4 + eps) xi^T inverts eigenvalue by eigenvalue
        q = geo.normalize(q_ref)
        M = np.column_stack([q, geo.xi_matrix(q)])
        d = np.array([1.0 / self.eps] + [1.0 / (0.25 * v + self.eps) for v in self.r_diag[3:]])
        block = (M * d) @ M.T
        R_inv[3:7, 3:7] = 0.5 * (block + block.T)
        return R_inv

    def Q_lifted(self, x: np.ndarray, dt: float) -> np.ndarray:
        G = noise_gain(x, dt)
        Qd = (G * np.asarray(self.q_diag)) @ G.T
        return 0.5 * (Qd + Qd.T)


# -- process model -----------------------------------------------------------


# index pairs for the constant diagonal blocks of F and G
_POS_VEL = (np.arange(0, 3), np.arange(7, 10))
_G_POS = (np.arange(0, 3), np.arange(0, 3))
_G_VEL = (np.arange(7, 10), np.arange(0, 3))
_G_RATES = (np.arange(10, 13), np.arange(3, 6))


def transition(x: np.ndarray, u: np.ndarray, dt: float) -> np.ndarray:
    """Single Euler step of the process model with quaternion renormalization."""
    q = x[QUAT]
    rates = x[RATES]
    out = np.array(x, dtype=float)
    out[POS] = x[POS] + dt * x[VEL]
    out[QUAT] = geo.normalize(q + 0.5 * dt * (geo.omega_matrix(rates) @ q))
    out[VEL] = x[VEL] + dt * u[0:3]
    out[RATES] = x[RATES] + dt * u[3:6]
    return out


def process_jacobian(x: np.ndarray, u: np.ndarray, dt: float) -> np.ndarray:
    """Jacobian of the un-normalized Euler step ``x + dt f(x, u)``."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    F = np.eye(STATE_DIM)
    F[_POS_VEL] = dt
    F[QUAT, QUAT] += 0.5 * dt * geo.omega_matrix(x[RATES])
    F[QUAT, RATES] = 0.5 * dt * geo.xi_matrix(x[QUAT])
    return F


def noise_gain(x: np.ndarray, dt: float) -> np.ndarray:
    """13x6 map from held acceleration noise over one step into the state."""
    G = np.zeros((STATE_DIM, INPUT_DIM))
    G[_G_POS] = 0.5 * dt * dt
    G[_G_VEL] = dt
    G[QUAT, 3:6] = 0.25 * dt * dt * geo.xi_matrix(x[QUAT])
    G[_G_RATES] = dt
    return G


# -- information/covariance conversion --------------------------------------


def _spd_inverse(A: np.ndarray, what: str) -> np.ndarray:
    """Inverse of a symmetric positive-definite matrix via LAPACK potrf/potri."""
    if not np.isfinite(A).all():
        raise FilterDivergence(f"{what} has non-finite entries")
    c, info = lapack.dpotrf(A, lower=1, clean=0)
    if info != 0:
        raise FilterDivergence(f"{what} is not positive definite")
    inv, info = lapack.dpotri(c, lower=1)
    if info != 0:
        raise FilterDivergence(f"{what} is singular")
    # potri fills the lower triangle only
    return np.where(_lower_mask(A.shape[0]), inv, inv.T)


@functools.lru_cache(maxsize=None)
def _lower_mask(n: int) -> np.ndarray:
    return np.tri(n, dtype=bool)


def _check_condition(A: np.ndarray, limit: float, what: str) -> None:
    w = np.linalg.eigvalsh(A)
    if w[0] <= 0.0 or w[-1] / w[0] > limit:
        raise FilterDivergence(f"{what} is ill-conditioned (eigenvalues {w[0]:.3g}..{w[-1]:.3g})")


def to_information(x: np.ndarray, P: np.ndarray) -> InformationPair:
    """``(x, P) -> (y, Y)`` with ``Y = P⁻¹`` and ``y = P⁻¹ x``."""
    P = np.asarray(P, dtype=float)
    if np.max(np.abs(P - P.T)) > 1e-9 * max(1.0, float(np.max(np.abs(P)))):
        raise FilterDivergence("covariance is not symmetric")
    Y = _spd_inverse(P, "covariance")
    return InformationPair(y=Y @ np.asarray(x, dtype=float), Y=Y)


def from_information(
    p: InformationPair, max_condition: float = MAX_CONDITION, renormalize: bool = True
) -> tuple[np.ndarray, np.ndarray]:
    """Recover ``(x, P)``; the quaternion part of ``x`` is renormalized."""
    _check_condition(p.Y, max_condition, "information matrix")
    P = _spd_inverse(p.Y, "information matrix")
    x = P @ p.y
    if renormalize:
        try:
            x[QUAT] = geo.normalize(x[QUAT])
        except geo.DegenerateQuaternionError as exc:
            raise FilterDivergence("estimated quaternion collapsed") from exc
    return x, P


def predict_covariance(
    x: np.ndarray, P: np.ndarray, u: np.ndarray, noise: NoiseConfig, dt: float
) -> tuple[np.ndarray, np.ndarray]:
    """Covariance-form prediction shared by the information filter and the EKF."""
    F = process_jacobian(x, u, dt)
    x_pred = transition(x, u, dt)
    P_pred = F @ P @ F.T + noise.Q_lifted(x, dt)
    return x_pred, 0.5 * (P_pred + P_pred.T)


def predict(p: InformationPair, u: np.ndarray, noise: NoiseConfig, dt: float) -> InformationPair:
    """Information-form prediction: ``Y⁻ = [F Y⁻¹ Fᵀ + Q]⁻¹``, ``y⁻ = Y⁻ f(x, u)``."""
    x, P = from_information(p, noise.max_condition)
    x_pred, P_pred = predict_covariance(x, P, u, noise, dt)
    Y_pred = _spd_inverse(P_pred, "predicted covariance")
    return InformationPair(y=Y_pred @ x_pred, Y=Y_pred)


# -- measurement update ------------------------------------------------------


def measurement_vector(z_p: np.ndarray, z_q: np.ndarray, q_ref: np.ndarray) -> np.ndarray:
    """Stack ``[z_p, z_q]`` with ``z_q`` flipped into the hemisphere of ``q_ref``."""
    return np.concatenate([np.asarray(z_p, dtype=float), geo.align_sign(np.asarray(z_q, dtype=float), q_ref)])


def local_contribution(
    x_pred: np.ndarray,
    z_p: np.ndarray,
    z_q: np.ndarray,
    noise: NoiseConfig,
    agent: int = 0,
    k: int = 0,
) -> Contribution:
    """Measurement information ``I = Hᵀ R⁻¹ H`` and ``i = Hᵀ R⁻¹ (ν + H x⁻)``."""
    q_ref = x_pred[QUAT]
    z = measurement_vector(z_p, z_q, q_ref)
    nu = z - H @ x_pred
    R_inv = noise.R_inverse(q_ref)
    # H only selects the first seven states, so H^T R^-1 H is R^-1 padded
    I = np.zeros((STATE_DIM, STATE_DIM))
    I[:MEAS_DIM, :MEAS_DIM] = R_inv
    i = np.zeros(STATE_DIM)
    i[:MEAS_DIM] = R_inv @ (nu + x_pred[:MEAS_DIM])
    return Contribution(i=i, I=I, agent=agent, k=k)


def fuse(p_pred: InformationPair, contributions: Iterable[Contribution]) -> tuple[InformationPair, int]:
    """Add contributions to the predicted information pair.

    Returns the fused pair and the number of contributions rejected for
    non-finite entries. Contributions are summed in a canonical order, so the
    result is bitwise independent of the order they arrived in.
    """
    contributions = list(contributions)
    if not contributions:
        return p_pred, 0
    good = sorted((c for c in contributions if c.is_finite()), key=lambda c: (c.agent, c.k))
    if any((a.agent, a.k) == (b.agent, b.k) for a, b in zip(good, good[1:])):
        good.sort(key=_canonical_key)
    rejected = len(contributions) - len(good)
    if not good:
        return p_pred, rejected
    y = p_pred.y.copy()
    Y = p_pred.Y.copy()
    for c in good:
        y += c.i
        Y += c.I
    Y = 0.5 * (Y + Y.T)
    return InformationPair(y=y, Y=Y), rejected


def _canonical_key(c: Contribution) -> tuple:
    # only used when two contributions share agent and step
    return (c.agent, c.k, c.i.tobytes(), c.I.tobytes())


# -- covariance-form oracle ---------------------------------------------------


def ekf_oracle_step(
    x: np.ndarray,
    P: np.ndarray,
    u: np.ndarray,
    z_list: Sequence[tuple[np.ndarray, np.ndarray]],
    noise: NoiseConfig,
    dt: float | None,
) -> tuple[np.ndarray, np.ndarray]:
    """Textbook EKF predict and stacked update with the filter's f, h, Q and R.

    ``dt=None`` skips the prediction. The stacked measurement has dimension
    ``7 * len(z_list)``; every block uses ``R`` mapped at the predicted
    quaternion.
    """
    if dt is None:
        x_pred, P_pred = np.array(x, dtype=float), np.array(P, dtype=float)
    else:
        x_pred, P_pred = predict_covariance(x, P, u, noise, dt)
    if not z_list:
        return x_pred, P_pred
    q_ref = x_pred[QUAT]
    n = len(z_list)
    Hs = np.vstack([H] * n)
    Rs = linalg.block_diag(*([noise.R(q_ref)] * n))
    nu = np.concatenate([measurement_vector(zp, zq, q_ref) - H @ x_pred for zp, zq in z_list])
    S = Hs @ P_pred @ Hs.T + Rs
    S = 0.5 * (S + S.T)
    try:
        c = linalg.cho_factor(S, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise FilterDivergence("innovation covariance is not positive definite") from exc
    K = linalg.cho_solve(c, Hs @ P_pred, check_finite=False).T
    x_upd = x_pred + K @ nu
    A = np.eye(STATE_DIM) - K @ Hs
    # Joseph form keeps P symmetric positive definite
    P_upd = A @ P_pred @ A.T + K @ Rs @ K.T
    P_upd = 0.5 * (P_upd + P_upd.T)
    x_upd[QUAT] = geo.normalize(x_upd[QUAT])
    return x_upd, P_upd


# -- wire format --------------------------------------------------------------

_HEADER = struct.Struct("<IQ")
_TRIU = np.triu_indices(STATE_DIM)
_N_TRIU = len(_TRIU[0])  # 91
WIRE_SIZE = _HEADER.size + 8 * (STATE_DIM + _N_TRIU)


def encode_contribution(c: Contribution) -> bytes:
    """Little-endian ``[agent u32, k u64, i (13 f64), triu(I) row-major (91 f64)]``."""
    body = np.concatenate([c.i, c.I[_TRIU]]).astype("<f8")
    return _HEADER.pack(c.agent, c.k) + body.tobytes()


def decode_contribution(data: bytes) -> Contribution:
    if len(data) != WIRE_SIZE:
        raise ValueError(f"expected {WIRE_SIZE} bytes, got {len(data)}")
    agent, k = _HEADER.unpack_from(data)
    body = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(float)
    I = np.zeros((STATE_DIM, STATE_DIM))
    I[_TRIU] = body[STATE_DIM:]
    I = I + np.triu(I, 1).T
    return Contribution(i=body[:STATE_DIM].copy(), I=I, agent=agent, k=k)


# -- per-agent filter -----------------------------------------------------------


@dataclass
class PriorConfig:
    """Initial covariance for velocity and rates; pose blocks come from R."""

    vel_var: float = 0.5
    rate_var: float = 0.5


def initial_covariance(q0: np.ndarray, noise: NoiseConfig, prior: PriorConfig) -> np.ndarray:
    P0 = np.zeros((STATE_DIM, STATE_DIM))
    P0[POS, POS] = noise.R_pos
    P0[QUAT, QUAT] = geo.euler_cov_to_quat_cov(q0, noise.R_euler, noise.eps)
    P0[VEL, VEL] = prior.vel_var * np.eye(3)
    P0[RATES, RATES] = prior.rate_var * np.eye(3)
    return P0


@dataclass
class FilterAgent:
    """One agent's information filter state machine.

    Per step: :meth:`predict`, then :meth:`contribution` for the local
    measurement, then :meth:`update` with the own contribution plus whatever
    peers delivered.
    """

    agent: int
    noise: NoiseConfig
    prior: PriorConfig = field(default_factory=PriorConfig)
    info: InformationPair | None = None
    x: np.ndarray | None = None
    P: np.ndarray | None = None
    x_pred: np.ndarray | None = None
    rejected: int = 0

    @property
    def initialized(self) -> bool:
        return self.info is not None

    def initialize(self, z_p: np.ndarray, z_q: np.ndarray) -> None:
        x0 = np.zeros(STATE_DIM)
        x0[POS] = z_p
        x0[QUAT] = geo.canonicalize(geo.normalize(np.asarray(z_q, dtype=float)))
        self.initialize_state(x0, initial_covariance(x0[QUAT], self.noise, self.prior))

    def initialize_state(self, x0: np.ndarray, P0: np.ndarray) -> None:
        self.info = to_information(x0, P0)
        self.x = np.array(x0, dtype=float)
        self.P = np.array(P0, dtype=float)
        self.x_pred = self.x

    def predict(self, u: np.ndarray, dt: float) -> None:
        x_pred, P_pred = predict_covariance(self.x, self.P, u, self.noise, dt)
        Y_pred = _spd_inverse(P_pred, "predicted covariance")
        self.info = InformationPair(y=Y_pred @ x_pred, Y=Y_pred)
        self.x_pred = x_pred

    def contribution(self, z_p: np.ndarray, z_q: np.ndarray, k: int) -> Contribution:
        return local_contribution(self.x_pred, z_p, z_q, self.noise, agent=self.agent, k=k)

    def update(self, contributions: Sequence[Contribution]) -> int:
        """Fuse and extract the posterior; returns the number of rejected contributions."""
        self.info, rejected = fuse(self.info, contributions)
        self.rejected += rejected
        self.x, self.P = from_information(self.info, self.noise.max_condition)
        return rejected
