"""Monte Carlo batches of episodes with per-tick statistics across runs."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import SimConfig
from .episode import EpisodeLog, run_episode
from .export import trajectory_table
from .metrics import GROUPS, block_traces, group_errors, position_nees


@dataclass
class RunResult:
    """Reduced per-run arrays for the reporting agent (small enough to ship between processes)."""

    seed: int
    diverged: bool
    errors: dict[str, np.ndarray]  # group -> (K,)
    traces: dict[str, np.ndarray]  # group -> (K,)
    nees: np.ndarray  # (K,)
    in_band: np.ndarray  # (K, 3) position within 2 sigma per axis
    tracking: np.ndarray  # (K,) truth position distance from the commanded reference
    table: np.ndarray  # (K, 27) export rows, see export.TRAJECTORY_HEADER
    log: Optional[EpisodeLog] = None


@dataclass
class McSummary:
    t: np.ndarray
    seeds: list[int]
    diverged: list[int]
    err_min: dict[str, np.ndarray] = field(default_factory=dict)
    err_mean: dict[str, np.ndarray] = field(default_factory=dict)
    err_max: dict[str, np.ndarray] = field(default_factory=dict)
    trace_rms: dict[str, np.ndarray] = field(default_factory=dict)
    nees_mean: Optional[np.ndarray] = None
    results: list[RunResult] = field(default_factory=list)

    @property
    def completed(self) -> int:
        return len(self.seeds) - len(self.diverged)


def reduce_log(log: EpisodeLog, agent: int = 0, keep_log: bool = False) -> RunResult:
    est = log.est[:, agent]
    cov = log.cov[:, agent]
    e = np.abs(est[:, 0:3] - log.truth[:, 0:3])
    sd = np.sqrt(np.diagonal(cov, axis1=-2, axis2=-1)[:, 0:3])
    return RunResult(
        seed=log.seed,
        diverged=log.diverged,
        errors=group_errors(est, log.truth),
        traces=block_traces(cov),
        nees=position_nees(est, cov, log.truth),
        in_band=e <= 2.0 * sd,
        tracking=np.linalg.norm(log.truth[:, 0:3] - log.ref[:, 0:3], axis=1),
        table=trajectory_table(log.t, log.truth, est, cov, log.u),
        log=log if keep_log else None,
    )


def _one(args: tuple[SimConfig, int, bool]) -> RunResult:
    cfg, seed, keep = args
    return reduce_log(run_episode(cfg, seed), cfg.report_agent, keep_log=keep)


def run_monte_carlo(
    cfg: SimConfig,
    runs: Optional[int] = None,
    workers: int = 1,
    keep_logs: bool = False,
) -> McSummary:
    """Run episodes with seeds ``cfg.seed + i`` and aggregate across non-diverged runs.

    Results do not depend on ``workers``: every run owns its random streams
    and runs are aggregated in seed order.
    """
    runs = cfg.runs if runs is None else runs
    seeds = [cfg.seed + i for i in range(runs)]
    jobs = [(cfg, s, keep_logs) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=min(workers, os.cpu_count() or 1)) as pool:
            results = list(pool.map(_one, jobs))
    else:
        results = [_one(j) for j in jobs]
    return summarize(cfg, results)


def summarize(cfg: SimConfig, results: list[RunResult]) -> McSummary:
    K = cfg.ticks + 1
    summary = McSummary(
        t=np.arange(K) * cfg.estimator_dt,
        seeds=[r.seed for r in results],
        diverged=[r.seed for r in results if r.diverged],
        results=results,
    )
    good = [r for r in results if not r.diverged]
    if not good:
        return summary
    with np.errstate(invalid="ignore"):
        for g in GROUPS:
            errs = np.stack([r.errors[g] for r in good])
            traces = np.stack([r.traces[g] for r in good])
            summary.err_min[g] = _nan_reduce(np.nanmin, errs)
            summary.err_mean[g] = _nan_reduce(np.nanmean, errs)
            summary.err_max[g] = _nan_reduce(np.nanmax, errs)
            summary.trace_rms[g] = np.sqrt(_nan_reduce(np.nanmean, traces**2))
        summary.nees_mean = _nan_reduce(np.nanmean, np.stack([r.nees for r in good]))
    return summary


def _nan_reduce(fn, a: np.ndarray) -> np.ndarray:
    out = np.full(a.shape[1:], np.nan)
    ok = np.isfinite(a).any(axis=0)
    out[ok] = fn(a[:, ok], axis=0)
    return out
