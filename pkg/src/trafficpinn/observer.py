"""Open-loop density propagation with direct probe injection.

The comparison baseline: march the traffic PDE forward from an empty road at
a fixed assumed free-flow speed, and whenever a probe reports, overwrite the
cells around its position with the measured density.  No training, no
feedback beyond the injection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import DensityField, kmh_to_kmmin
from .errors import ConfigError, DomainError
from .probes import ProbeDataset
from .solver import stable_dt

_GHOST_EPS = 1e-9


@dataclass(frozen=True)
class ObserverConfig:
    """Assumed dynamics and injection policy of the baseline."""

    assumed_vf_kmh: float = 37.5
    injection_radius: int = 1
    cfl_safety: float = 0.9

    def __post_init__(self):
        if self.assumed_vf_kmh <= 0:
            raise ConfigError("assumed_vf_kmh must be positive")
        if self.injection_radius < 0:
            raise ConfigError("injection_radius must be non-negative")
        if not 0 < self.cfl_safety <= 1:
            raise ConfigError("cfl_safety must be in (0, 1]")


@dataclass
class ObserverState:
    """Current density row on the grid plus the fixed assumptions."""

    row: np.ndarray
    assumed_vf_kmh: float
    injection_radius: int

    def __post_init__(self):
        row = np.asarray(self.row, dtype=float)
        if row.ndim != 1 or row.size < 3:
            raise DomainError("observer row must be 1-d with at least three nodes")
        if row.min() < 0.0 or row.max() > 1.0:
            raise DomainError("observer densities must lie in [0, 1]")
        self.row = row


def observer_step(state, measurements, dx, dt, gamma):
    """Propagate one step with zero-gradient boundaries, then inject.

    ``measurements`` is an iterable of ``(x_km, rho)`` pairs applied after
    the propagation; injection overwrites every node within the injection
    radius (in cells) of each reported position.  Returns a new state.
    """
    vf = kmh_to_kmmin(state.assumed_vf_kmh)
    limit = stable_dt(dx, vf, gamma, 1.0)
    if dt > limit * (1.0 + 1e-12):
        raise ConfigError(f"dt {dt} exceeds observer stability limit {limit}")
    row = state.row
    padded = np.concatenate([[row[0]], row, [row[-1]]])
    f = vf * padded * (1.0 - padded)
    flux = 0.5 * (f[:-1] + f[1:]) - 0.5 * vf * (padded[1:] - padded[:-1])
    adv = row - dt / dx * (flux[1:] - flux[:-1])
    adv_pad = np.concatenate([[adv[0]], adv, [adv[-1]]])
    new = adv + gamma * dt / dx**2 * (adv_pad[2:] - 2.0 * adv + adv_pad[:-2])
    new = np.clip(new, 0.0, 1.0)
    n = new.size
    for x, rho in measurements:
        center = x / dx
        lo = max(0, int(np.ceil(center - state.injection_radius - _GHOST_EPS)))
        hi = min(n - 1, int(np.floor(center + state.injection_radius + _GHOST_EPS)))
        if lo <= hi:
            new[lo:hi + 1] = min(max(float(rho), 0.0), 1.0)
    return ObserverState(new, state.assumed_vf_kmh, state.injection_radius)


@dataclass
class ObserverRun:
    """Estimated field and per-time squared-error trace of one observer run."""

    field: DensityField
    cee: list


def propagate(measurements, positions, times, gamma, config=ObserverConfig()):
    """March the observer over output ``times`` on the node grid ``positions``.

    ``measurements`` is an ``(n, 3)`` array of ``(t_min, x_km, rho)`` rows in
    any order.  Returns the estimated :class:`DensityField` on the given
    grid, starting from an empty road.
    """
    positions = np.asarray(positions, dtype=float)
    times = np.asarray(times, dtype=float)
    dx = float(positions[1] - positions[0])
    horizon = float(times[-1])
    meas = np.asarray(measurements, dtype=float).reshape(-1, 3) if np.size(measurements) else np.empty((0, 3))
    order = np.argsort(meas[:, 0], kind="stable") if meas.size else []
    meas = meas[order] if meas.size else meas

    vf = kmh_to_kmmin(config.assumed_vf_kmh)
    dt_limit = stable_dt(dx, vf, gamma, config.cfl_safety)
    n_steps = max(1, int(np.ceil(horizon / dt_limit)))
    dt = horizon / n_steps

    state = ObserverState(np.zeros_like(positions), config.assumed_vf_kmh,
                          config.injection_radius)
    rows = np.empty((n_steps + 1, positions.size))
    rows[0] = state.row
    cursor = 0
    for k in range(n_steps):
        t_next = (k + 1) * dt
        batch = []
        while cursor < meas.shape[0] and meas[cursor, 0] <= t_next + _GHOST_EPS:
            batch.append((meas[cursor, 1], meas[cursor, 2]))
            cursor += 1
        state = observer_step(state, batch, dx, dt, gamma)
        rows[k + 1] = state.row

    u = np.clip(times / dt, 0.0, n_steps)
    lo = np.clip(np.floor(u).astype(int), 0, n_steps - 1)
    w = (u - lo)[:, None]
    values = (1.0 - w) * rows[lo] + w * rows[lo + 1]
    return DensityField(times, positions, np.clip(values, 0.0, 1.0))


def run_observer(truth, probes, assumed_vf_kmh, gamma, config=None):
    """Run the baseline against a truth field and score it per output time.

    ``probes`` is a :class:`ProbeDataset` or ``(n, 3)`` measurement array of
    ``(t, x, rho)`` rows.  The observer lives on the truth grid, so errors
    are exact node-aligned trapezoid integrals.
    """
    config = config or ObserverConfig()
    if assumed_vf_kmh != config.assumed_vf_kmh:
        config = ObserverConfig(assumed_vf_kmh, config.injection_radius, config.cfl_safety)
    if isinstance(probes, ProbeDataset):
        arr = probes.as_array()
        meas = arr[:, [0, 1, 3]] if arr.size else np.empty((0, 3))
    else:
        meas = np.asarray(probes, dtype=float).reshape(-1, 3) if np.size(probes) else np.empty((0, 3))
    est = propagate(meas, truth.positions, truth.times, gamma, config)
    sq = (truth.values - est.values) ** 2
    errs = np.trapezoid(sq, truth.positions, axis=1)
    trace = [(float(t), float(e)) for t, e in zip(truth.times, errs)]
    return ObserverRun(est, trace)
