"""Probe kinematics, sampling conventions, and trajectory CSV round trips."""

import numpy as np
import pytest

from conftest import flat_field
from trafficpinn.domain import FreeFlowSchedule
from trafficpinn.errors import DataError, DomainError
from trafficpinn.probes import (
    FleetConfig,
    ProbeDataset,
    ProbeTrajectory,
    advance_probe,
    read_probes_csv,
    run_fleet,
    window,
    write_probes_csv,
)


def quiet_fleet(**kwargs):
    defaults = dict(spawn_times=(0.0,), noise_rho_std=0.0, noise_v_std_kmh=0.0, seed=0)
    defaults.update(kwargs)
    return FleetConfig(**defaults)


def test_sample_count_on_one_minute_horizon():
    # 3 Hz for one minute, sample instants strictly before the horizon
    field = flat_field(horizon_min=1.0)
    fleet = run_fleet(field, FreeFlowSchedule.constant(37.5), quiet_fleet())
    assert len(fleet.trajectories) == 1
    assert fleet.trajectories[0].n_samples == 180


def test_window_is_inclusive_on_both_ends():
    field = flat_field(horizon_min=3.0, n_t=151)
    fleet = run_fleet(field, FreeFlowSchedule.constant(37.5), quiet_fleet())
    assert fleet.n_samples == 540
    sliced = window(fleet, 1.0, 2.0)
    # 180 per interior minute plus both endpoint instants
    assert sliced.n_samples == 181
    assert sliced.trajectories[0].t[0] == 1.0
    assert sliced.trajectories[0].t[-1] == 2.0
    # source dataset is untouched
    assert fleet.n_samples == 540


def test_window_validation_and_emptiness():
    field = flat_field(horizon_min=1.0)
    fleet = run_fleet(field, FreeFlowSchedule.constant(37.5), quiet_fleet())
    with pytest.raises(DomainError):
        window(fleet, 2.0, 1.0)
    empty = window(fleet, 10.0, 11.0)
    assert empty.n_samples == 0
    assert len(empty.trajectories) == 0


def test_zero_noise_measurements_satisfy_closure():
    # with silent sensors the speed column equals vf (1 - rho) exactly
    field = flat_field(horizon_min=1.0, rho=0.4, n_x=21)
    ff = FreeFlowSchedule.constant(30.0)
    fleet = run_fleet(field, ff, quiet_fleet())
    arr = fleet.as_array()
    v_expected = 30.0 * (1.0 - arr[:, 3])
    assert np.max(np.abs(arr[:, 2] - v_expected)) <= 1e-12
    assert np.max(np.abs(arr[:, 3] - 0.4)) <= 1e-12


def test_fleet_determinism():
    field = flat_field(horizon_min=2.0, rho=0.3, n_t=101)
    ff = FreeFlowSchedule.constant(37.5)
    a = run_fleet(field, ff, FleetConfig(seed=5))
    b = run_fleet(field, ff, FleetConfig(seed=5))
    assert np.array_equal(a.as_array(), b.as_array())
    c = run_fleet(field, ff, FleetConfig(seed=6))
    assert not np.array_equal(a.as_array(), c.as_array())


def test_probe_exits_at_road_end():
    # 0.5 km road at 30 km/h is cleared after one minute
    field = flat_field(horizon_min=5.0, length_km=0.5, n_t=251, n_x=6)
    fleet = run_fleet(field, FreeFlowSchedule.constant(30.0), quiet_fleet())
    traj = fleet.trajectories[0]
    assert traj.x[-1] < 0.5
    assert traj.t[-1] <= 1.0 + 1e-9


def test_advance_probe_on_empty_road():
    field = flat_field(horizon_min=1.0, rho=0.0)
    x1 = advance_probe(1.0, field, 0.625, 0.5, 0.1)
    assert x1 == pytest.approx(1.0625, rel=1e-15)
    # clamped at the downstream end
    assert advance_probe(4.99, field, 0.625, 0.5, 1.0) == 5.0


def test_trajectory_validation():
    t = np.array([0.0, 1.0, 2.0])
    x = np.array([0.0, 0.5, 1.0])
    v = np.array([30.0, 30.0, 30.0])
    r = np.array([0.2, 0.2, 0.2])
    ProbeTrajectory(0, t, x, v, r)
    with pytest.raises(DataError):
        ProbeTrajectory(0, t[::-1].copy(), x, v, r)
    with pytest.raises(DataError):
        ProbeTrajectory(0, t, np.array([0.0, 0.6, 0.5]), v, r)
    with pytest.raises(DataError):
        ProbeTrajectory(0, t, x, np.array([30.0, -1.0, 30.0]), r)
    with pytest.raises(DataError):
        ProbeTrajectory(0, t, x, v, np.array([0.2, 1.4, 0.2]))


def test_probes_csv_round_trip(tmp_path):
    field = flat_field(horizon_min=1.0, rho=0.35, n_x=21)
    ff = FreeFlowSchedule.constant(37.5)
    fleet = run_fleet(field, ff, FleetConfig(spawn_times=(0.0, 0.4), seed=2))
    path = tmp_path / "probes.csv"
    write_probes_csv(fleet, path)
    back = read_probes_csv(path)
    assert len(back.trajectories) == len(fleet.trajectories)
    for orig, rt in zip(fleet.trajectories, back.trajectories):
        assert rt.probe_id == orig.probe_id
        assert np.array_equal(rt.t, orig.t)
        assert np.array_equal(rt.x, orig.x)
        assert np.array_equal(rt.v_kmh, orig.v_kmh)
        assert np.array_equal(rt.rho, orig.rho)


def test_probes_csv_rejects_missing_density_column(tmp_path):
    path = tmp_path / "probes.csv"
    path.write_text("t_min,probe_id,x_km,v_kmh\n0.0,0,0.0,30.0\n")
    with pytest.raises(DataError, match="rho"):
        read_probes_csv(path)


def test_probes_csv_rejects_bad_rows(tmp_path):
    head = "t_min,probe_id,x_km,v_kmh,rho\n"
    path = tmp_path / "probes.csv"
    path.write_text(head + "0.0,0,0.0,30.0,0.2\n0.5,0,0.1,30.0,1.9\n")
    with pytest.raises(DataError, match="probes.csv:3"):
        read_probes_csv(path)
    # per-probe time order is checked across interleaved rows
    path.write_text(head + "1.0,0,0.5,30.0,0.2\n0.5,0,0.6,30.0,0.2\n")
    with pytest.raises(DataError, match="probes.csv:3"):
        read_probes_csv(path)
    path.write_text(head + "0.0,0,0.0,not_a_number,0.2\n")
    with pytest.raises(DataError, match="probes.csv:2"):
        read_probes_csv(path)


def test_probes_csv_missing_file():
    with pytest.raises(DataError, match="cannot read"):
        read_probes_csv("/nonexistent/probes.csv")


def test_dataset_as_array_layout():
    t = np.array([0.0, 0.5])
    traj = ProbeTrajectory(3, t, np.array([0.0, 0.2]), np.array([30.0, 29.0]),
                           np.array([0.1, 0.2]))
    data = ProbeDataset((traj,))
    arr = data.as_array()
    assert arr.shape == (2, 4)
    np.testing.assert_array_equal(arr[:, 0], t)
    np.testing.assert_array_equal(arr[:, 1], [0.0, 0.2])
    np.testing.assert_array_equal(arr[:, 2], [30.0, 29.0])
    np.testing.assert_array_equal(arr[:, 3], [0.1, 0.2])
