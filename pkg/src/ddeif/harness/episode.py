"""One closed simulation episode: truth, sensing, distributed filtering, control."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import BinaryIO, Optional

import numpy as np

from .. import sensor
from ..controller import compute_input
from ..dynamics import QUAT, STATE_DIM, HeldDisturbance, step_truth
from ..estimator import FilterAgent, FilterDivergence, initial_covariance
from ..network import Bus, BusMessage
from ..streams import stream
from ..trajectory import feedforward_table, reference
from .config import SimConfig


@dataclass
class EpisodeLog:
    """Per-tick record of one episode; tick ``k`` is at ``t[k] = k * dt``.

    ``est`` and ``cov`` are NaN for an agent until it has initialized, and
    for every agent from the tick a filter diverged onwards.
    """

    seed: int
    t: np.ndarray  # (K,)
    truth: np.ndarray  # (K, 13)
    ref: np.ndarray  # (K, 13)
    est: np.ndarray  # (K, A, 13)
    cov: np.ndarray  # (K, A, 13, 13)
    valid: np.ndarray  # (K, A) local detection available
    comms: np.ndarray  # (K, A) peer contributions received
    n_fused: np.ndarray  # (K, A) contributions fused, own included
    u: np.ndarray  # (K, 6) command applied to the truth from t[k]
    diverged: bool = False
    diverged_at: Optional[float] = None
    message: str = ""

    @property
    def comms_active(self) -> np.ndarray:
        """(K, A) whether the agent received any peer contribution at that tick."""
        return self.comms > 0


def substep_count(cfg: SimConfig, k: int) -> int:
    """Physics substeps completed by estimator tick ``k``.

    The physics step is fixed at ``1 / physics_hz``. When the rates do not
    divide (250 Hz against 20 Hz) the per-tick count alternates, 12/13, and
    the truth time lags the tick time by less than one physics step.
    """
    return int(math.floor(k * cfg.estimator_dt * cfg.physics_hz + 1e-9))


def run_episode(cfg: SimConfig, seed: Optional[int] = None, record: Optional[BinaryIO] = None) -> EpisodeLog:
    seed = cfg.seed if seed is None else int(seed)
    A = cfg.agents
    K = cfg.ticks + 1
    dt = cfg.estimator_dt
    h = 1.0 / cfg.physics_hz

    formation = cfg.formation
    if formation.splay is None:
        formation = dataclasses.replace(formation, splay=sensor.centering_splay(formation, cfg.camera))
    dist = HeldDisturbance(stream(seed, "disturbance"), cfg.disturbance)
    sense_rng = [stream(seed, "sensor", j) for j in range(A)]
    jitter_rng = [stream(seed, "jitter", j) for j in range(A)]
    r_diag = cfg.noise.r_diag
    bus = Bus(A, cfg.loss, latency=cfg.latency, record=record)
    agents = [FilterAgent(agent=j, noise=cfg.noise, prior=cfg.prior) for j in range(A)]

    log = EpisodeLog(
        seed=seed,
        t=np.arange(K) * dt,
        truth=np.zeros((K, STATE_DIM)),
        ref=np.zeros((K, STATE_DIM)),
        est=np.full((K, A, STATE_DIM), np.nan),
        cov=np.full((K, A, STATE_DIM, STATE_DIM), np.nan),
        valid=np.zeros((K, A), dtype=bool),
        comms=np.zeros((K, A), dtype=np.int32),
        n_fused=np.zeros((K, A), dtype=np.int32),
        u=np.zeros((K, 6)),
    )

    traj = cfg.trajectory
    x_true = reference(0.0, traj).as_state()
    if cfg.init == "truth":
        P0 = initial_covariance(x_true[QUAT], cfg.noise, cfg.prior)
        for a in agents:
            a.initialize_state(x_true, P0)

    # command held over the previous interval: truth offset and per-agent inputs
    offset = np.zeros(6)
    u_agents = [None] * A

    for k in range(K):
        t = k * dt
        # 1. truth over (t - dt, t]
        if k > 0:
            first = substep_count(cfg, k - 1)
            n_sub = substep_count(cfg, k) - first
            t0 = first * h
            # feed-forward tabulated on the RK4 half-step grid
            table = feedforward_table(t0 + 0.5 * h * np.arange(2 * n_sub + 1), traj) + offset
            for m in range(n_sub):
                s = t0 + m * h
                stages = table[2 * m : 2 * m + 3]
                x_true = step_truth(
                    x_true,
                    lambda r, _s=s, _st=stages: _st[int(round(2.0 * (r - _s) / h))],
                    dist.at(s),
                    h,
                    t=s,
                    mass=cfg.disturbance.payload_mass,
                )
        ref_k = reference(t, traj)
        log.truth[k] = x_true
        log.ref[k] = ref_k.as_state()

        try:
            # 2. sense
            poses = sensor.quad_poses(x_true, A, formation, cfg.camera, rng=jitter_rng)
            meas = [
                sensor.sense(j, t, poses[j], x_true, cfg.camera, sense_rng[j], r_diag, cfg.dropout)
                for j in range(A)
            ]
            log.valid[k] = [m.valid for m in meas]

            # 3. predict, 4. first-fix initialization
            fresh = [False] * A
            for j, a in enumerate(agents):
                if a.initialized and k > 0:
                    a.predict(u_agents[j], dt)
                elif not a.initialized and meas[j].valid:
                    a.initialize(meas[j].z_p, meas[j].z_q)
                    fresh[j] = True

            # 5. local contributions and broadcast
            own = [None] * A
            for j, a in enumerate(agents):
                if a.initialized and not fresh[j] and meas[j].valid:
                    own[j] = a.contribution(meas[j].z_p, meas[j].z_q, k)
                    bus.broadcast(BusMessage(sender=j, k=k, payload=own[j], send_time=t))

            # 6. collect and fuse
            for j, a in enumerate(agents):
                peers = bus.collect(j, k)
                log.comms[k, j] = len(peers)
                if not a.initialized or fresh[j]:
                    continue
                batch = ([own[j]] if own[j] is not None else []) + peers
                if k > 0 or batch:
                    a.update(batch)
                log.n_fused[k, j] = len(batch)
        except FilterDivergence as exc:
            log.diverged = True
            log.diverged_at = t
            log.message = str(exc)
            break

        for j, a in enumerate(agents):
            if a.initialized:
                log.est[k, j] = a.x
                log.cov[k, j] = a.P

        # 7. control for the next interval
        ff = ref_k.feedforward
        if cfg.mode == "isolated":
            offset = np.zeros(6)
            u_agents = [ff] * A
        else:
            cmds = [compute_input(a.x, ref_k, cfg.controller) if a.initialized else ff for a in agents]
            if cfg.control_source == "agent0":
                cmds = [cmds[0]] * A
            offset = np.mean([c - ff for c in cmds], axis=0)
            u_agents = cmds
        log.u[k] = ff + offset

    return log
