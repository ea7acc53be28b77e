"""Error groups, covariance traces, NEES and coverage for episode logs."""

from __future__ import annotations

import numpy as np

from ..dynamics import POS, QUAT, RATES, VEL

GROUPS = ("position", "orientation", "velocity", "rates")
_BLOCKS = {"position": POS, "orientation": QUAT, "velocity": VEL, "rates": RATES}


def quat_angle(q_est: np.ndarray, q_true: np.ndarray) -> np.ndarray:
    """Vectorized ``2‖vec(q_est ⊗ q_true⁻¹)‖`` over leading axes (rad).

    The norm of the vector part is the same for both signs of the product,
    so no explicit sign alignment is needed.
    """
    w1, v1 = q_est[..., :1], q_est[..., 1:]
    w2, v2 = q_true[..., :1], q_true[..., 1:]
    vec = w2 * v1 - w1 * v2 - np.cross(v1, v2)
    return 2.0 * np.linalg.norm(vec, axis=-1)


def group_errors(est: np.ndarray, truth: np.ndarray) -> dict[str, np.ndarray]:
    """Per-group error magnitudes; ``est`` is ``(..., 13)`` and broadcasts with ``truth``."""
    out = {}
    for g in GROUPS:
        if g == "orientation":
            out[g] = quat_angle(est[..., QUAT], truth[..., QUAT])
        else:
            s = _BLOCKS[g]
            out[g] = np.linalg.norm(est[..., s] - truth[..., s], axis=-1)
    return out


def block_traces(cov: np.ndarray) -> dict[str, np.ndarray]:
    diag = np.diagonal(cov, axis1=-2, axis2=-1)
    return {g: diag[..., _BLOCKS[g]].sum(axis=-1) for g in GROUPS}


def position_nees(est: np.ndarray, cov: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """``eᵀ P⁻¹ e`` on the position block; NaN wherever the estimate is missing."""
    e = est[..., POS] - truth[..., POS]
    P = cov[..., POS, POS]
    out = np.full(e.shape[:-1], np.nan)
    ok = np.isfinite(e).all(axis=-1) & np.isfinite(P).all(axis=(-2, -1))
    if ok.any():
        sol = np.linalg.solve(P[ok], e[ok][..., None])[..., 0]
        out[ok] = np.sum(e[ok] * sol, axis=-1)
    return out


def band_fraction(est: np.ndarray, cov: np.ndarray, truth: np.ndarray, block: slice = POS, k: float = 2.0) -> float:
    """Fraction of (tick, axis) samples with ``|error| <= k sigma`` on one state block."""
    e = np.abs(est[..., block] - truth[..., block])
    sd = np.sqrt(np.diagonal(cov, axis1=-2, axis2=-1)[..., block])
    ok = np.isfinite(e) & np.isfinite(sd)
    if not ok.any():
        return float("nan")
    return float(np.mean(e[ok] <= k * sd[ok]))


def nees_bounds(runs: int, dof: int = 3, confidence: float = 0.95) -> tuple[float, float]:
    """Two-sided chi-square acceptance interval for a run-averaged NEES."""
    from scipy.stats import chi2

    tail = 0.5 * (1.0 - confidence)
    n = runs * dof
    return float(chi2.ppf(tail, n) / runs), float(chi2.ppf(1.0 - tail, n) / runs)
