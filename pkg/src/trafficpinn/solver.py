"""Explicit finite-difference integration of the viscous traffic PDE.

The density obeys a conservation law with Greenshield flux ``vf * rho * (1 -
rho)`` plus linear diffusion.  Advection uses a local Lax-Friedrichs flux with
dissipation speed ``vf`` (the largest wave speed for this flux), diffusion a
central second difference, and boundaries are Dirichlet nodes driven by
piecewise-constant schedules.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .domain import DensityField, RoadDomain, kmh_to_kmmin
from .errors import ConfigError, DataError, DomainError

_FIELD_HEADER = ["t_min", "x_km", "rho"]


def _validate_trace(trace, name):
    trace = tuple((float(t), float(r)) for t, r in trace)
    if not trace:
        raise DomainError(f"{name} boundary trace needs at least one entry")
    if trace[0][0] != 0.0:
        raise DomainError(f"{name} boundary trace must start at 0")
    starts = [t for t, _ in trace]
    if any(b <= a for a, b in zip(starts, starts[1:])):
        raise DomainError(f"{name} boundary trace starts must be strictly increasing")
    if any(not 0.0 <= r <= 1.0 for _, r in trace):
        raise DomainError(f"{name} boundary densities must lie in [0, 1]")
    return trace


@dataclass(frozen=True)
class BoundarySchedule:
    """Piecewise-constant Dirichlet densities at both ends of the road."""

    left: tuple[tuple[float, float], ...]
    right: tuple[tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "left", _validate_trace(self.left, "left"))
        object.__setattr__(self, "right", _validate_trace(self.right, "right"))

    @classmethod
    def constant(cls, left_rho, right_rho):
        return cls(((0.0, left_rho),), ((0.0, right_rho),))

    @staticmethod
    def _lookup(trace, t):
        starts = np.array([s for s, _ in trace])
        idx = int(np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(trace) - 1))
        return trace[idx][1]

    def left_rho(self, t):
        return self._lookup(self.left, t)

    def right_rho(self, t):
        return self._lookup(self.right, t)


def random_boundary_schedule(horizon_min, dwell_min=2.0, seed=0, rng_tag=3):
    """Seeded boundary schedule: fresh uniform [0, 1] levels every ``dwell_min``."""
    if dwell_min <= 0:
        raise DomainError(f"dwell_min must be positive, got {dwell_min}")
    rng = np.random.default_rng([seed, rng_tag])
    starts = np.arange(0.0, horizon_min, dwell_min)
    left = tuple((float(t), float(rng.uniform())) for t in starts)
    right = tuple((float(t), float(rng.uniform())) for t in starts)
    return BoundarySchedule(left, right)


@dataclass(frozen=True)
class SolverConfig:
    """Grid resolution and stepping policy for the truth simulation.

    ``initial_density`` may be a constant, an array over the ``nx + 1`` grid
    nodes, or a callable ``x -> rho``.
    """

    nx: int = 200
    cfl_safety: float = 0.9
    output_dt_min: float = 0.02
    initial_density: object = 0.0

    def __post_init__(self):
        if self.nx < 16:
            raise ConfigError(f"nx must be at least 16, got {self.nx}")
        if not 0 < self.cfl_safety <= 1:
            raise ConfigError(f"cfl_safety must be in (0, 1], got {self.cfl_safety}")
        if self.output_dt_min <= 0:
            raise ConfigError("output_dt_min must be positive")


def stable_dt(dx, vf_kmmin, gamma, cfl_safety=0.9):
    """Largest stable explicit step for wave speed ``vf`` and diffusion ``gamma``."""
    if dx <= 0 or vf_kmmin <= 0 or gamma <= 0:
        raise DomainError("dx, vf and gamma must all be positive")
    if not 0 < cfl_safety <= 1:
        raise DomainError(f"cfl_safety must be in (0, 1], got {cfl_safety}")
    return cfl_safety * min(dx / vf_kmmin, dx * dx / (2.0 * gamma))


def _greenshield_flux(rho, vf):
    return vf * rho * (1.0 - rho)


def _split_update(row, vf, gamma, dx, dt):
    """Interior update: Lax-Friedrichs advection, then explicit diffusion.

    Applying the two substeps in sequence keeps each one monotone under the
    ``stable_dt`` bound, so interior values stay inside the range spanned by
    their neighbours; a combined single-stage update would not.
    """
    f = _greenshield_flux(row, vf)
    # interface fluxes between nodes j and j+1, with |wave speed| <= vf
    flux = 0.5 * (f[:-1] + f[1:]) - 0.5 * vf * (row[1:] - row[:-1])
    adv = row.copy()
    adv[1:-1] = row[1:-1] - dt / dx * (flux[1:] - flux[:-1])
    return adv[1:-1] + gamma * dt / dx**2 * (adv[2:] - 2.0 * adv[1:-1] + adv[:-2])


def step(row, vf_kmmin, gamma, dx, dt, bc_left, bc_right):
    """Advance node densities one explicit step and return the new row.

    Interior nodes get a Lax-Friedrichs advective substep followed by a
    central-difference diffusion substep; the end nodes are overwritten with
    the Dirichlet values.  A step size beyond the stability bound raises
    :class:`ConfigError`.
    """
    row = np.asarray(row, dtype=float)
    if row.ndim != 1 or row.size < 3:
        raise DomainError("row must be 1-d with at least three nodes")
    limit = stable_dt(dx, vf_kmmin, gamma, 1.0)
    if dt > limit * (1.0 + 1e-12):
        raise ConfigError(f"dt {dt} exceeds stability limit {limit}")
    if not 0.0 <= bc_left <= 1.0 or not 0.0 <= bc_right <= 1.0:
        raise DomainError("boundary densities must lie in [0, 1]")
    new = row.copy()
    new[1:-1] = _split_update(row, vf_kmmin, gamma, dx, dt)
    new[0] = bc_left
    new[-1] = bc_right
    return np.clip(new, 0.0, 1.0)


@dataclass
class SolverReport:
    """Diagnostics accumulated over a simulation run."""

    max_excursion: float = 0.0
    mass_times: list = field(default_factory=list)
    mass: list = field(default_factory=list)


def _resolve_initial(config, x):
    init = config.initial_density
    if callable(init):
        row = np.asarray(init(x), dtype=float)
    else:
        row = np.broadcast_to(np.asarray(init, dtype=float), x.shape).astype(float)
    if row.shape != x.shape:
        raise ConfigError("initial density must give one value per grid node")
    if row.min() < 0.0 or row.max() > 1.0:
        raise ConfigError("initial density must lie in [0, 1]")
    return row


def simulate(domain, config, boundary, freeflow, report=None):
    """Integrate the density over ``domain`` and return a :class:`DensityField`.

    The solver step obeys the stability bound for the largest scheduled
    free-flow speed; solver rows are resampled linearly onto the uniform
    output cadence.  Pass a :class:`SolverReport` to collect diagnostics.
    """
    nx = config.nx
    dx = domain.length_km / nx
    x = np.arange(nx + 1) * dx
    gamma = domain.viscosity
    vf_max = kmh_to_kmmin(freeflow.max_kmh())
    dt_limit = stable_dt(dx, vf_max, gamma, config.cfl_safety)
    n_steps = max(1, int(np.ceil(domain.horizon_min / dt_limit)))
    dt = domain.horizon_min / n_steps

    row = _resolve_initial(config, x)
    row[0] = boundary.left_rho(0.0)
    row[-1] = boundary.right_rho(0.0)
    rows = np.empty((n_steps + 1, nx + 1))
    rows[0] = row
    track = report is not None
    for k in range(n_steps):
        t = k * dt
        t_next = (k + 1) * dt
        vf = kmh_to_kmmin(freeflow.value_kmh(t))
        if track:
            raw = _raw_step(row, vf, gamma, dx, dt)
            excursion = max(0.0, float(raw.max()) - 1.0, -float(raw.min()))
            report.max_excursion = max(report.max_excursion, excursion)
        row = step(row, vf, gamma, dx, dt, boundary.left_rho(t_next), boundary.right_rho(t_next))
        rows[k + 1] = row
        if track:
            report.mass_times.append(t_next)
            report.mass.append(float(np.trapezoid(row, x)))

    n_out = max(1, round(domain.horizon_min / config.output_dt_min))
    times_out = np.linspace(0.0, domain.horizon_min, n_out + 1)
    # linear resampling from solver steps onto the output cadence
    u = np.clip(times_out / dt, 0.0, n_steps)
    lo = np.clip(np.floor(u).astype(int), 0, n_steps - 1)
    w = (u - lo)[:, None]
    values = (1.0 - w) * rows[lo] + w * rows[lo + 1]
    return DensityField(times_out, x, np.clip(values, 0.0, 1.0))


def _raw_step(row, vf, gamma, dx, dt):
    """Unclamped interior update, used only to audit clamping excursions."""
    return _split_update(row, vf, gamma, dx, dt)


def write_field_csv(field_obj, path):
    """Write a density field as ``t_min,x_km,rho`` rows, row-major in time."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_FIELD_HEADER)
        for i, t in enumerate(field_obj.times):
            for j, xx in enumerate(field_obj.positions):
                writer.writerow([repr(float(t)), repr(float(xx)), repr(float(field_obj.values[i, j]))])


def read_field_csv(path):
    """Read a ``t_min,x_km,rho`` file back into a :class:`DensityField`."""
    times = []
    rows = {}
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read field file {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _FIELD_HEADER:
            raise DataError(f"{path}:1: expected header {','.join(_FIELD_HEADER)}")
        for lineno, parts in enumerate(reader, start=2):
            if not parts:
                continue
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 columns, got {len(parts)}")
            try:
                t, xx, r = (float(p) for p in parts)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if not 0.0 <= r <= 1.0:
                raise DataError(f"{path}:{lineno}: density {r} outside [0, 1]")
            rows.setdefault(t, []).append((xx, r))
            if not times or times[-1] != t:
                times.append(t)
    if not times:
        raise DataError(f"{path}: no data rows")
    positions = [xx for xx, _ in rows[times[0]]]
    values = np.empty((len(times), len(positions)))
    for i, t in enumerate(times):
        if [xx for xx, _ in rows[t]] != positions:
            raise DataError(f"{path}: inconsistent position grid at t={t}")
        values[i] = [r for _, r in rows[t]]
    try:
        return DensityField(np.array(times), np.array(positions), values)
    except DomainError as exc:
        raise DataError(f"{path}: {exc}") from None
