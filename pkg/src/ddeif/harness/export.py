"""CSV and manifest output for episodes and Monte Carlo campaigns.

Files written into the output directory:

``summary.csv``
    ``time`` then, for each group in ``position, orientation, velocity,
    rates``: ``<group>_err_min, <group>_err_mean, <group>_err_max,
    <group>_trace_rms``.
``run_<seed>.csv``
    ``time``, truth pose ``truth_<s>``, the reporting agent's estimate
    ``est_<s>`` and its two-sigma half width ``sigma2_<s>`` for
    ``s`` in ``n, e, d, qw, qx, qy, qz``, then the applied command
    ``u_vn, u_ve, u_vd, u_p, u_q, u_r``.
``manifest.yaml``
    Full configuration, seeds and diverged seeds; feeding it back to
    ``--config`` reproduces the CSVs byte for byte.

Floats are written with 17 significant digits so values round-trip exactly.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
import yaml

from .. import __version__
from .config import SimConfig
from .metrics import GROUPS

if TYPE_CHECKING:
    from .montecarlo import McSummary

POSE = ("n", "e", "d", "qw", "qx", "qy", "qz")
COMMAND = ("u_vn", "u_ve", "u_vd", "u_p", "u_q", "u_r")

SUMMARY_HEADER = ["time"] + [f"{g}_{s}" for g in GROUPS for s in ("err_min", "err_mean", "err_max", "trace_rms")]
TRAJECTORY_HEADER = (
    ["time"]
    + [f"truth_{s}" for s in POSE]
    + [f"est_{s}" for s in POSE]
    + [f"sigma2_{s}" for s in POSE]
    + list(COMMAND)
)


def trajectory_table(t: np.ndarray, truth: np.ndarray, est: np.ndarray, cov: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Rows matching :data:`TRAJECTORY_HEADER` for one agent's estimate."""
    sd2 = 2.0 * np.sqrt(np.diagonal(cov, axis1=-2, axis2=-1)[:, :7])
    return np.column_stack([t, truth[:, :7], est[:, :7], sd2, u])


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _csv_text(header: list[str], rows: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def summary_rows(summary: "McSummary") -> np.ndarray:
    cols = [summary.t]
    for g in GROUPS:
        cols += [summary.err_min[g], summary.err_mean[g], summary.err_max[g], summary.trace_rms[g]]
    return np.column_stack(cols)


def manifest(cfg: SimConfig, summary: "McSummary") -> dict:
    return {
        "version": __version__,
        "seeds": list(summary.seeds),
        "diverged": list(summary.diverged),
        "config": cfg.to_dict(),
    }


def export_results(cfg: SimConfig, summary: "McSummary", out_dir: Path | str) -> list[Path]:
    """Write summary, per-run trajectories and manifest; returns the paths written.

    All text is rendered before anything touches the disk, and each file is
    written through a temporary file, so a failure never leaves a partial file.
    """
    if not summary.results:
        raise ValueError("nothing to export: no runs")
    if not summary.err_mean:
        raise ValueError("nothing to export: every run diverged")
    out = Path(out_dir)
    files: dict[str, str] = {"summary.csv": _csv_text(SUMMARY_HEADER, summary_rows(summary))}
    for r in summary.results:
        files[f"run_{r.seed}.csv"] = _csv_text(TRAJECTORY_HEADER, r.table)
    files["manifest.yaml"] = yaml.safe_dump(manifest(cfg, summary), sort_keys=False)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in files.items():
        path = out / name
        _atomic_write(path, text)
        written.append(path)
    return written
