"""Shared builders for the test suite.

Small worlds are rebuilt per module; anything that takes more than a couple
of seconds lives in a session fixture so expensive runs happen once.
"""

import numpy as np
import pytest

from trafficpinn.domain import DensityField, FreeFlowSchedule, RoadDomain
from trafficpinn.probes import FleetConfig, run_fleet
from trafficpinn.solver import BoundarySchedule, SolverConfig, random_boundary_schedule, simulate


def flat_field(horizon_min=1.0, length_km=5.0, rho=0.0, n_t=51, n_x=11):
    """Hand-built constant density field, cheap enough for any test."""
    times = np.linspace(0.0, horizon_min, n_t)
    positions = np.linspace(0.0, length_km, n_x)
    values = np.full((n_t, n_x), rho)
    return DensityField(times, positions, values)


def small_world(horizon_min=4.0, seed=0, nx=100, vf_kmh=37.5, dwell_min=2.0):
    """Simulated truth plus fleet on a short horizon, a few hundred ms."""
    domain = RoadDomain(length_km=5.0, horizon_min=horizon_min, viscosity=0.005)
    freeflow = FreeFlowSchedule.constant(vf_kmh)
    boundary = random_boundary_schedule(horizon_min, dwell_min=dwell_min, seed=seed)
    field = simulate(domain, SolverConfig(nx=nx), boundary, freeflow)
    fleet = run_fleet(field, freeflow, FleetConfig(seed=seed))
    return domain, freeflow, field, fleet


@pytest.fixture(scope="session")
def small_run():
    """One shared 4-minute world for tests that only need plausible data."""
    return small_world()
