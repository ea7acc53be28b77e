import numpy as np
import pytest

from ddeif import geometry as geo
from ddeif.dynamics import (
    DisturbanceModel,
    HeldDisturbance,
    payload_derivative,
    sample_disturbance,
    step_truth,
)
from ddeif.trajectory import TrajectoryConfig, reference


def rest_state():
    x = np.zeros(13)
    x[3] = 1.0
    return x


def test_equilibrium_has_zero_derivative():
    np.testing.assert_array_equal(payload_derivative(rest_state(), np.zeros(6), np.zeros(3)), np.zeros(13))


def test_roll_rate_quaternion_derivative():
    x = rest_state()
    x[10] = np.pi
    dx = payload_derivative(x, np.zeros(6), np.zeros(3))
    np.testing.assert_allclose(dx[3:7], [0.0, np.pi / 2, 0.0, 0.0], atol=0)


def test_disturbance_force_over_mass():
    dx = payload_derivative(rest_state(), np.zeros(6), np.array([0.227, 0.0, 0.0]), mass=1.2)
    assert dx[7] == pytest.approx(0.18917, abs=1e-5)
    assert dx[7] == 0.227 / 1.2


def test_step_with_zero_derivative_is_identity():
    x = rest_state()
    x[0:3] = [1.0, -2.0, 3.0]
    np.testing.assert_array_equal(step_truth(x, np.zeros(6), np.zeros(3), 0.004), x)


def test_constant_acceleration_closed_form():
    a = np.array([0.3, -0.2, 0.1])
    x = rest_state()
    u = np.r_[a, 0.0, 0.0, 0.0]
    for _ in range(250):
        x = step_truth(x, u, np.zeros(3), 0.004)
    t = 250 * 0.004
    assert np.abs(x[0:3] - 0.5 * a * t**2).max() < 1e-10
    assert np.abs(x[7:10] - a * t).max() < 1e-12


def test_full_roll_revolution_returns_attitude():
    x = rest_state()
    x[10] = 1.0
    n = 2000
    dt = 2 * np.pi / n
    for _ in range(n):
        x = step_truth(x, np.zeros(6), np.zeros(3), dt)
    assert geo.attitude_error(x[3:7], geo.IDENTITY_QUAT) < 1e-6


def test_quaternion_norm_preserved(rng):
    x = rest_state()
    x[10:13] = rng.standard_normal(3)
    for _ in range(500):
        x = step_truth(x, rng.standard_normal(6), rng.standard_normal(3), 0.004)
        assert abs(np.linalg.norm(x[3:7]) - 1.0) < 1e-9


def test_zero_input_constant_except_attitude():
    x = rest_state()
    x[0:3] = [1.0, 2.0, 3.0]
    x[7:10] = 0.0
    x[10:13] = [0.1, -0.2, 0.3]
    y = x
    for _ in range(100):
        y = step_truth(y, np.zeros(6), np.zeros(3), 0.004)
    np.testing.assert_array_equal(y[0:3], x[0:3])
    np.testing.assert_array_equal(y[7:13], x[7:13])
    assert geo.attitude_error(y[3:7], x[3:7]) > 0.01


@pytest.mark.parametrize("kind", ["pirouette", "lissajous"])
def test_feedforward_reproduces_reference(kind):
    cfg = TrajectoryConfig(kind=kind, center=(0.0, 0.0, -3.0) if kind == "lissajous" else (0.0, 2.5, -3.0))
    dt = 0.004
    x = reference(0.0, cfg).as_state()
    ff = lambda s: reference(s, cfg).feedforward  # noqa: E731
    worst = 0.0
    for k in range(15000):
        x = step_truth(x, ff, np.zeros(3), dt, t=k * dt)
        if k % 50 == 49:
            worst = max(worst, np.linalg.norm(x[0:3] - reference((k + 1) * dt, cfg).position))
    assert worst < 1e-5


def test_step_rejects_nonpositive_dt():
    with pytest.raises(ValueError):
        step_truth(rest_state(), np.zeros(6), np.zeros(3), 0.0)


def test_zero_sigma_gives_zero_force(rng):
    model = DisturbanceModel(sigma_force=0.0)
    for _ in range(10):
        np.testing.assert_array_equal(sample_disturbance(rng, model), np.zeros(3))


def test_disturbance_statistics(rng):
    model = DisturbanceModel()
    n = 100_000
    f = np.array([sample_disturbance(rng, model) for _ in range(n)])
    assert np.all(f[:, 2] == 0.0)
    assert np.all(np.abs(f.mean(axis=0)[:2]) < 3 * model.sigma_force / np.sqrt(n))
    # each planar component has variance sigma²/2 for a uniform heading
    np.testing.assert_allclose(f[:, :2].var(axis=0), model.sigma_force**2 / 2, rtol=0.03)
    assert np.sqrt(np.mean(np.sum(f**2, axis=1))) == pytest.approx(model.sigma_force, rel=0.01)


def test_held_disturbance_changes_only_at_interval_boundaries(rng):
    held = HeldDisturbance(rng, DisturbanceModel(hold=0.05))
    values = [held.at(k / 240) for k in range(240)]
    changes = [k for k in range(1, 240) if not np.array_equal(values[k], values[k - 1])]
    # new value exactly at each multiple of 0.05 s (every 12 physics ticks at 240 Hz)
    assert changes == list(range(12, 240, 12))


def test_disturbance_model_validation():
    with pytest.raises(ValueError):
        DisturbanceModel(sigma_force=-1.0)
    with pytest.raises(ValueError):
        DisturbanceModel(payload_mass=0.0)
    with pytest.raises(ValueError):
        DisturbanceModel(hold=0.0)
