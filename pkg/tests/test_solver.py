"""Finite-difference scheme: stability bound, invariants, CSV round trip."""

import numpy as np
import pytest

from trafficpinn.domain import FreeFlowSchedule, RoadDomain, sample_field
from trafficpinn.errors import ConfigError, DataError, DomainError
from trafficpinn.solver import (
    BoundarySchedule,
    SolverConfig,
    SolverReport,
    random_boundary_schedule,
    read_field_csv,
    simulate,
    stable_dt,
    step,
    write_field_csv,
)


def test_stable_dt_pinned_example():
    # dx 0.025, vf 0.625 km/min, gamma 0.005: advective bound 0.04 wins
    assert stable_dt(0.025, 0.625, 0.005, 0.9) == pytest.approx(0.036, rel=1e-12)


def test_stable_dt_diffusive_branch():
    # gamma large enough that dx^2/(2 gamma) is the binding limit
    assert stable_dt(0.1, 0.5, 0.1, 1.0) == pytest.approx(0.05, rel=1e-15)
    assert stable_dt(0.1, 0.5, 0.001, 1.0) == pytest.approx(0.2, rel=1e-15)


def test_boundary_schedule_lookup():
    bc = BoundarySchedule(((0.0, 0.2), (1.0, 0.8)), ((0.0, 0.5),))
    assert bc.left_rho(0.0) == 0.2
    assert bc.left_rho(0.999) == 0.2
    assert bc.left_rho(1.0) == 0.8
    assert bc.right_rho(5.0) == 0.5
    const = BoundarySchedule.constant(0.1, 0.9)
    assert const.left_rho(3.0) == 0.1
    assert const.right_rho(3.0) == 0.9


def test_boundary_schedule_validation():
    with pytest.raises(DomainError):
        BoundarySchedule(((1.0, 0.2),), ((0.0, 0.5),))  # must start at 0
    with pytest.raises(DomainError):
        BoundarySchedule(((0.0, 1.2),), ((0.0, 0.5),))  # density range
    with pytest.raises(DomainError):
        BoundarySchedule(((0.0, 0.2), (2.0, 0.3), (2.0, 0.4)), ((0.0, 0.5),))


def test_random_boundary_schedule_deterministic():
    a = random_boundary_schedule(10.0, dwell_min=2.0, seed=7)
    b = random_boundary_schedule(10.0, dwell_min=2.0, seed=7)
    assert a.left == b.left
    assert a.right == b.right
    c = random_boundary_schedule(10.0, dwell_min=2.0, seed=8)
    assert a.left != c.left
    # dwell controls the switching cadence
    starts = [t for t, _ in a.left]
    assert starts == pytest.approx(list(np.arange(0.0, 10.0, 2.0)))
    assert all(0.0 <= rho <= 1.0 for _, rho in a.left + a.right)


def test_step_rejects_unstable_dt():
    row = np.full(11, 0.3)
    with pytest.raises(ConfigError):
        step(row, 0.625, 0.005, 0.5, dt=1.0, bc_left=0.3, bc_right=0.3)


def test_step_preserves_constants_exactly():
    row = np.full(101, 0.4)
    out = step(row, 0.625, 0.005, 0.05, dt=0.05, bc_left=0.4, bc_right=0.4)
    assert np.array_equal(out, row)


def test_simulate_constant_state():
    domain = RoadDomain(length_km=5.0, horizon_min=2.0, viscosity=0.005)
    freeflow = FreeFlowSchedule.constant(37.5)
    bc = BoundarySchedule.constant(0.35, 0.35)
    config = SolverConfig(nx=100, initial_density=0.35)
    field = simulate(domain, config, bc, freeflow)
    assert np.max(np.abs(field.values - 0.35)) <= 1e-12


def test_simulate_empty_road_stays_empty():
    domain = RoadDomain(length_km=5.0, horizon_min=1.0, viscosity=0.005)
    bc = BoundarySchedule.constant(0.0, 0.0)
    field = simulate(domain, SolverConfig(nx=64), bc, FreeFlowSchedule.constant(30.0))
    assert np.max(field.values) == 0.0


def test_simulate_output_grid_shape():
    domain = RoadDomain(length_km=5.0, horizon_min=1.0, viscosity=0.005)
    bc = BoundarySchedule.constant(0.2, 0.2)
    config = SolverConfig(nx=80, output_dt_min=0.02)
    field = simulate(domain, config, bc, FreeFlowSchedule.constant(30.0))
    assert field.values.shape == (51, 81)
    assert field.times[0] == 0.0
    assert field.times[-1] == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(np.diff(field.times), 0.02)


def test_simulate_respects_max_principle():
    # rough boundary data on a switching free-flow schedule must never
    # push the solution outside [0, 1] beyond roundoff
    domain = RoadDomain(length_km=5.0, horizon_min=3.0, viscosity=0.005)
    freeflow = FreeFlowSchedule(((0.0, 37.5), (1.5, 18.75)))
    bc = random_boundary_schedule(3.0, dwell_min=0.5, seed=3)
    report = SolverReport()
    field = simulate(domain, SolverConfig(nx=120), bc, freeflow, report=report)
    assert report.max_excursion <= 1e-9
    assert np.all(field.values >= 0.0) and np.all(field.values <= 1.0)
    assert np.all(np.isfinite(report.mass))


def test_initial_density_forms():
    domain = RoadDomain(length_km=2.0, horizon_min=0.1, viscosity=0.005)
    bc = BoundarySchedule.constant(0.0, 1.0)
    ff = FreeFlowSchedule.constant(30.0)
    ramp = simulate(domain, SolverConfig(nx=20, initial_density=lambda x: x / 2.0), bc, ff)
    assert ramp.values[0, 0] == 0.0
    assert ramp.values[0, -1] == 1.0
    arr = np.linspace(0.0, 1.0, 21)
    explicit = simulate(domain, SolverConfig(nx=20, initial_density=arr), bc, ff)
    np.testing.assert_allclose(explicit.values[0], arr)
    with pytest.raises(ConfigError):
        SolverConfig(nx=8)  # grid too coarse


def test_field_csv_round_trip(tmp_path):
    domain = RoadDomain(length_km=5.0, horizon_min=0.5, viscosity=0.005)
    bc = random_boundary_schedule(0.5, dwell_min=0.25, seed=1)
    field = simulate(domain, SolverConfig(nx=32), bc, FreeFlowSchedule.constant(37.5))
    path = tmp_path / "field.csv"
    write_field_csv(field, path)
    back = read_field_csv(path)
    # repr-format floats survive the text round trip bit for bit
    assert np.array_equal(back.times, field.times)
    assert np.array_equal(back.positions, field.positions)
    assert np.array_equal(back.values, field.values)


def test_field_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("time,x,density\n0.0,0.0,0.1\n")
    with pytest.raises(DataError, match=":1:"):
        read_field_csv(path)


def test_field_csv_rejects_bad_row(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t_min,x_km,rho\n0.0,0.0,0.1\n0.0,1.0,1.7\n")
    with pytest.raises(DataError, match="bad.csv:3"):
        read_field_csv(path)


def test_field_csv_missing_file():
    with pytest.raises(DataError, match="cannot read"):
        read_field_csv("/nonexistent/nowhere.csv")
