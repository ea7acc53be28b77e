import io
import subprocess
import sys

import numpy as np
import pytest
import yaml

from ddeif import geometry as geo
from ddeif.cli import main
from ddeif.dynamics import DisturbanceModel
from ddeif.estimator import NoiseConfig, WIRE_SIZE
from ddeif.harness.config import SCENARIOS, ConfigError, SimConfig, dump_config, load_config, scenario
from ddeif.harness.episode import run_episode, substep_count
from ddeif.harness.export import SUMMARY_HEADER, TRAJECTORY_HEADER, export_results
from ddeif.harness.metrics import band_fraction, block_traces, group_errors, nees_bounds, position_nees, quat_angle
from ddeif.harness.montecarlo import McSummary, run_monte_carlo, summarize
from ddeif.network import LossSchedule
from ddeif.trajectory import TrajectoryConfig, reference

from .conftest import random_quat


def short(**changes):
    base = SimConfig(trajectory=TrajectoryConfig(ramp=2.0), duration=4.0, runs=3)
    return base.replace(**changes)


# -- configuration -------------------------------------------------------------------


def test_yaml_round_trip(tmp_path):
    for name in SCENARIOS:
        cfg = scenario(name)
        path = tmp_path / f"{name}.yaml"
        path.write_text(dump_config(cfg))
        back = load_config(path)
        assert back.to_dict() == cfg.to_dict()


def test_manifest_is_a_valid_config(tmp_path):
    path = tmp_path / "manifest.yaml"
    path.write_text(yaml.safe_dump({"version": "x", "seeds": [0], "config": short().to_dict()}))
    assert load_config(path).to_dict() == short().to_dict()


@pytest.mark.parametrize(
    "data",
    [
        {"bogus": 1},
        {"mode": "open_loop"},
        {"duration": 5.0},  # not longer than the 10 s default ramp
        {"camera": {"lens": 3}},
        {"noise": {"r_diag": [0.1, 0.1]}},
        {"loss": {"windows": [{"start": 30, "end": 20}]}},
        {"agents": 0},
        {"trajectory": "pirouette"},
    ],
)
def test_invalid_config_raises(data):
    with pytest.raises(ConfigError):
        SimConfig.from_dict(data)


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("[1, 2")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_scenarios():
    assert scenario("pirouette").loss.windows == []
    w = scenario("lissajous-commloss").loss.windows
    assert [(x.start, x.end, x.mode) for x in w] == [(20.0, 40.0, "blackout")]
    assert scenario("lissajous").mode == "in_loop" and scenario("pirouette").mode == "isolated"
    with pytest.raises(ConfigError):
        scenario("figure9")


# -- episodes --------------------------------------------------------------------------


@pytest.mark.parametrize("hz, pattern", [(240.0, {12}), (250.0, {12, 13})])
def test_substep_schedule(hz, pattern):
    cfg = short(physics_hz=hz)
    counts = [substep_count(cfg, k) - substep_count(cfg, k - 1) for k in range(1, cfg.ticks + 1)]
    assert set(counts) == pattern
    assert substep_count(cfg, cfg.ticks) == int(round(cfg.duration * hz))


def test_noiseless_episode_is_exact():
    cfg = scenario("pirouette").replace(
        disturbance=DisturbanceModel(sigma_force=0.0), noise=NoiseConfig(r_diag=(1e-13,) * 6)
    )
    log = run_episode(cfg)
    assert not log.diverged
    err = np.linalg.norm(log.est[..., 0:3] - log.truth[:, None, 0:3], axis=-1)
    assert np.isfinite(err).all()
    assert err.max() < 1e-6


def test_same_seed_is_deterministic():
    cfg = short(mode="in_loop")
    a, b = run_episode(cfg, 5), run_episode(cfg, 5)
    for name in ("truth", "est", "cov", "u", "valid", "comms"):
        assert np.array_equal(getattr(a, name), getattr(b, name), equal_nan=True), name
    c = run_episode(cfg, 6)
    assert not np.array_equal(a.truth, c.truth)


def test_record_stream(tmp_path):
    buf = io.BytesIO()
    log = run_episode(short(duration=3.0), record=buf)
    # full comms: every broadcast reaches three peers
    sent, rest = divmod(int(log.comms.sum()), 3)
    assert rest == 0 and sent > 0
    assert len(buf.getvalue()) == WIRE_SIZE * sent


def test_identical_agents_are_bit_identical():
    cfg = short(init="truth", duration=6.0)
    log = run_episode(cfg)
    assert not log.diverged
    for j in range(1, cfg.agents):
        assert np.array_equal(log.cov[:, j], log.cov[:, 0])
    # states agree to rounding (each agent's own measurement enters its own linearization only through x_pred)
    assert np.abs(log.est[:, 1:] - log.est[:, :1]).max() < 1e-12


def test_measurement_initialization_waits_for_first_fix():
    log = run_episode(short())
    assert np.isfinite(log.est[0]).all()
    assert (log.n_fused[0] == 0).all()
    assert (log.n_fused[1:] == 4).all()


def test_blackout_isolates_agents():
    base = SimConfig(duration=25.0, runs=1)
    full = run_episode(base, 1)
    cut = run_episode(base.replace(loss=LossSchedule.blackout(20.0, 40.0)), 1)
    window = (full.t >= 20.0) & (full.t < 40.0)
    assert (cut.comms[window] == 0).all() and (cut.n_fused[window] == 1).all()
    assert (cut.comms[~window & (cut.t > 0)] == 3).all()
    tr_full = np.trace(full.cov, axis1=-2, axis2=-1)
    tr_cut = np.trace(cut.cov, axis1=-2, axis2=-1)
    assert (tr_cut[window] > tr_full[window]).all()
    np.testing.assert_array_equal(tr_cut[~window], tr_full[~window])


def test_in_loop_control_applies_mean_feedback():
    cfg = short(mode="in_loop")
    log = run_episode(cfg)
    ff = np.array([reference(t, cfg.trajectory).feedforward for t in log.t])
    assert np.isfinite(log.u).all()
    assert np.abs(log.u - ff).max() > 1e-3
    iso = run_episode(cfg.replace(mode="isolated"))
    np.testing.assert_array_equal(iso.u, ff)
    # the truth leaves the reference by a small, bounded amount
    assert np.linalg.norm(log.truth[:, :3] - log.ref[:, :3], axis=1).max() < 0.5


def test_divergence_is_reported():
    # a far-too-confident prior makes the information matrix ill-conditioned immediately
    cfg = short(noise=NoiseConfig(r_diag=(1e-20,) * 6))
    log = run_episode(cfg)
    assert log.diverged and log.diverged_at is not None and log.message


# -- metrics --------------------------------------------------------------------------


def test_quat_angle_matches_scalar_metric(rng):
    a = np.array([random_quat(rng) for _ in range(100)])
    b = np.array([random_quat(rng) for _ in range(100)])
    got = quat_angle(a, b)
    for k in range(100):
        vec = geo.multiply(a[k], geo.conjugate(b[k]))[1:]
        assert got[k] == pytest.approx(2.0 * np.linalg.norm(vec), abs=1e-14)
    np.testing.assert_allclose(quat_angle(a, -a), 0.0, atol=1e-15)


def test_nees_and_band_helpers(rng):
    truth = np.zeros((1000, 13))
    cov = np.broadcast_to(np.eye(13) * 0.25, (1000, 13, 13))
    est = truth + 0.5 * rng.standard_normal((1000, 13))
    nees = position_nees(est, cov, truth)
    assert nees.mean() == pytest.approx(3.0, rel=0.1)
    assert band_fraction(est, cov, truth) == pytest.approx(0.9545, abs=0.02)
    est[3] = np.nan
    assert np.isnan(position_nees(est, cov, truth)[3])
    lo, hi = nees_bounds(50)
    # Wilson-Hilferty cube-root approximation for chi-square(150) quantiles, scaled by 1/50
    n, z = 150, 1.959964
    wh = [n * (1 - 2 / (9 * n) + s * z * np.sqrt(2 / (9 * n))) ** 3 / 50 for s in (-1, 1)]
    assert (lo, hi) == pytest.approx(wh, abs=2e-3)
    assert lo < 3.0 < hi
    traces = block_traces(cov)
    assert traces["position"][0] == pytest.approx(0.75)
    assert set(group_errors(est, truth)) == {"position", "orientation", "velocity", "rates"}


# -- Monte Carlo and export --------------------------------------------------------------


def test_single_run_statistics_are_degenerate():
    s = run_monte_carlo(short(), runs=1)
    for g in s.err_mean:
        np.testing.assert_array_equal(s.err_min[g], s.err_mean[g])
        np.testing.assert_array_equal(s.err_max[g], s.err_mean[g])


def test_aggregation_matches_naive_recomputation():
    cfg = short()
    s = run_monte_carlo(cfg, keep_logs=True)
    logs = [r.log for r in s.results]
    for g in s.err_mean:
        errs = np.array([group_errors(log.est[:, 0], log.truth)[g] for log in logs])
        np.testing.assert_allclose(s.err_mean[g], errs.mean(axis=0), rtol=0, atol=1e-12)
        np.testing.assert_allclose(s.err_min[g], errs.min(axis=0), rtol=0, atol=1e-12)
        np.testing.assert_allclose(s.err_max[g], errs.max(axis=0), rtol=0, atol=1e-12)
        assert (s.err_min[g] <= s.err_mean[g]).all() and (s.err_mean[g] <= s.err_max[g]).all()
        traces = np.array([block_traces(log.cov[:, 0])[g] for log in logs])
        np.testing.assert_allclose(s.trace_rms[g], np.sqrt((traces**2).mean(axis=0)), rtol=1e-12)


def test_diverged_runs_are_excluded():
    cfg = short()
    s = run_monte_carlo(cfg, runs=2)
    bad = s.results[1]
    bad.diverged = True
    again = summarize(cfg, s.results)
    assert again.diverged == [bad.seed] and again.completed == 1
    np.testing.assert_array_equal(again.err_mean["position"], s.results[0].errors["position"])


def test_export_refuses_empty(tmp_path):
    out = tmp_path / "out"
    with pytest.raises(ValueError):
        export_results(short(), McSummary(t=np.zeros(1), seeds=[], diverged=[]), out)
    assert not out.exists()


def test_export_schema_and_reproducibility(tmp_path):
    cfg = short(seed=7, runs=2)
    paths = export_results(cfg, run_monte_carlo(cfg), tmp_path / "a")
    names = sorted(p.name for p in paths)
    assert names == ["manifest.yaml", "run_7.csv", "run_8.csv", "summary.csv"]
    a = tmp_path / "a"
    assert (a / "summary.csv").read_text().splitlines()[0] == ",".join(SUMMARY_HEADER)
    assert (a / "run_7.csv").read_text().splitlines()[0] == ",".join(TRAJECTORY_HEADER)
    assert len((a / "run_7.csv").read_text().splitlines()) == cfg.ticks + 2

    again = load_config(a / "manifest.yaml")
    export_results(again, run_monte_carlo(again), tmp_path / "b")
    for name in names:
        assert (a / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_parallel_matches_serial(tmp_path):
    cfg = short(runs=3)
    export_results(cfg, run_monte_carlo(cfg, workers=1), tmp_path / "s")
    export_results(cfg, run_monte_carlo(cfg, workers=2), tmp_path / "p")
    for path in (tmp_path / "s").iterdir():
        assert path.read_bytes() == (tmp_path / "p" / path.name).read_bytes(), path.name


# -- command line ---------------------------------------------------------------------------


def test_cli_validate(capsys):
    assert main(["validate"]) == 0
    assert "FAIL" not in capsys.readouterr().out


def test_cli_config_errors(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.yaml")]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("mode: sideways\n")
    assert main(["mc", "--config", str(bad)]) == 2
    assert "config error" in capsys.readouterr().err


def test_cli_run_and_mc(tmp_path, capsys):
    path = tmp_path / "cfg.yaml"
    path.write_text(dump_config(short()))
    assert main(["run", "--config", str(path), "--seed", "3", "--out", str(tmp_path / "run")]) == 0
    assert (tmp_path / "run" / "run_3.csv").exists()
    assert main(["mc", "--config", str(path), "--runs", "2", "--out", str(tmp_path / "mc")]) == 0
    assert sorted(p.name for p in (tmp_path / "mc").iterdir()) == [
        "manifest.yaml",
        "run_0.csv",
        "run_1.csv",
        "summary.csv",
    ]


def test_cli_divergence_exit_code(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text(dump_config(short(noise=NoiseConfig(r_diag=(1e-20,) * 6))))
    assert main(["run", "--config", str(path)]) == 3


def test_cli_scenario_dump(capsys):
    assert main(["scenario", "lissajous-commloss", "--dump"]) == 0
    data = yaml.safe_load(capsys.readouterr().out)
    assert data["mode"] == "in_loop" and data["loss"]["windows"][0]["start"] == 20.0


def test_console_script_module_entry():
    out = subprocess.run([sys.executable, "-m", "ddeif.cli", "scenario", "pirouette", "--dump"], capture_output=True, text=True)
    assert out.returncode == 0 and "pirouette" in out.stdout
