"""Probe vehicles advected by the density field and their noisy measurements.

Each probe enters at the upstream end, moves with the local Greenshield speed
at the true free-flow value, and reports position, speed, and density at a
fixed sampling rate until it leaves the road.  Measurement noise is seeded
and Gaussian; probe motion itself is noise-free.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .domain import kmh_to_kmmin, sample_field
from .errors import DataError, DomainError

_PROBE_HEADER = ["t_min", "probe_id", "x_km", "v_kmh", "rho"]


@dataclass(frozen=True)
class ProbeTrajectory:
    """Sampled path of one probe: strictly increasing times, ordered positions."""

    probe_id: int
    t: np.ndarray
    x: np.ndarray
    v_kmh: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        arrays = {}
        for name in ("t", "x", "v_kmh", "rho"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim != 1:
                raise DataError(f"probe {self.probe_id}: {name} must be 1-d")
            arrays[name] = arr
        n = arrays["t"].size
        if any(a.size != n for a in arrays.values()):
            raise DataError(f"probe {self.probe_id}: sample arrays differ in length")
        if np.any(np.diff(arrays["t"]) <= 0):
            raise DataError(f"probe {self.probe_id}: sample times must strictly increase")
        if np.any(np.diff(arrays["x"]) < 0):
            raise DataError(f"probe {self.probe_id}: positions must be non-decreasing")
        if np.any(arrays["v_kmh"] < 0):
            raise DataError(f"probe {self.probe_id}: speeds must be non-negative")
        if np.any(arrays["rho"] < 0) or np.any(arrays["rho"] > 1):
            raise DataError(f"probe {self.probe_id}: densities must lie in [0, 1]")
        for arr in arrays.values():
            arr.flags.writeable = False
        for name, arr in arrays.items():
            object.__setattr__(self, name, arr)

    @property
    def n_samples(self):
        return self.t.size


@dataclass(frozen=True)
class ProbeDataset:
    """Ordered collection of probe trajectories."""

    trajectories: tuple[ProbeTrajectory, ...]

    def __post_init__(self):
        object.__setattr__(self, "trajectories", tuple(self.trajectories))

    @property
    def n_samples(self):
        return sum(tr.n_samples for tr in self.trajectories)

    def as_array(self):
        """Pool all samples into an ``(n, 4)`` array of (t, x, v_kmh, rho) rows."""
        if not self.trajectories:
            return np.empty((0, 4))
        return np.concatenate(
            [np.column_stack([tr.t, tr.x, tr.v_kmh, tr.rho]) for tr in self.trajectories]
        )


def window(dataset, t1, t2):
    """Restrict a dataset to samples with ``t1 <= t <= t2``, preserving order."""
    if t1 > t2:
        raise DomainError(f"empty window: t1 {t1} > t2 {t2}")
    kept = []
    for tr in dataset.trajectories:
        mask = (tr.t >= t1) & (tr.t <= t2)
        if mask.any():
            kept.append(
                ProbeTrajectory(tr.probe_id, tr.t[mask], tr.x[mask], tr.v_kmh[mask], tr.rho[mask])
            )
    return ProbeDataset(tuple(kept))


@dataclass(frozen=True)
class FleetConfig:
    """Spawn policy, sampling rate, and measurement noise levels.

    Probes spawn at ``x = 0`` either at the explicit ``spawn_times`` or with
    seeded exponential gaps of mean ``mean_gap_min``.  ``sampling_rate_hz``
    is in samples per second; noise levels of zero give exact measurements.
    """

    spawn_times: tuple[float, ...] | None = None
    mean_gap_min: float = 0.5
    sampling_rate_hz: float = 3.0
    noise_rho_std: float = 0.02
    noise_v_std_kmh: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.spawn_times is not None:
            object.__setattr__(self, "spawn_times", tuple(float(t) for t in self.spawn_times))
            if any(b <= a for a, b in zip(self.spawn_times, self.spawn_times[1:])):
                raise DomainError("spawn_times must be strictly increasing")
            if any(t < 0 for t in self.spawn_times):
                raise DomainError("spawn_times must be non-negative")
        if self.mean_gap_min <= 0:
            raise DomainError("mean_gap_min must be positive")
        if self.sampling_rate_hz <= 0:
            raise DomainError("sampling_rate_hz must be positive")
        if self.noise_rho_std < 0 or self.noise_v_std_kmh < 0:
            raise DomainError("noise levels must be non-negative")


def advance_probe(x, field, vf_kmmin, t, dt):
    """One Euler step of probe position under the local Greenshield speed."""
    rho = sample_field(field, t, x)
    speed = vf_kmmin * (1.0 - rho)
    x_max = field.x_span[1]
    return min(x + dt * speed, x_max)


def _spawn_times(config, horizon):
    if config.spawn_times is not None:
        return [t for t in config.spawn_times if t < horizon]
    rng = np.random.default_rng([config.seed, 1])
    out = []
    t = float(rng.exponential(config.mean_gap_min))
    while t < horizon:
        out.append(t)
        t += float(rng.exponential(config.mean_gap_min))
    return out

def _scalar_sampler(field):
    """Fast plain-float bilinear lookup bound to one field's grid."""
    t0, dt = float(field.times[0]), float(field.dt)
    x0, dx = float(field.positions[0]), float(field.dx)
    nt, nx = field.times.size, field.positions.size
    values = field.values

    def rho_at(t, x):
        u = (t - t0) / dt
        r = round(u)
        if abs(u - r) < 1e-9:
            u = float(r)
        iu = int(u)
        iu = 0 if iu < 0 else (nt - 2 if iu > nt - 2 else iu)
        wu = u - iu
        wu = 0.0 if wu < 0.0 else (1.0 if wu > 1.0 else wu)
        w = (x - x0) / dx
        r = round(w)
        if abs(w - r) < 1e-9:
            w = float(r)
        iw = int(w)
        iw = 0 if iw < 0 else (nx - 2 if iw > nx - 2 else iw)
        ww = w - iw
        ww = 0.0 if ww < 0.0 else (1.0 if ww > 1.0 else ww)
        row0 = values[iu]
        row1 = values[iu + 1]
        return ((1.0 - wu) * ((1.0 - ww) * row0[iw] + ww * row0[iw + 1])
                + wu * ((1.0 - ww) * row1[iw] + ww * row1[iw + 1]))

    return rho_at


def _run_probe(pid, spawn, field, freeflow, config):
    """March one probe from spawn to exit, measuring at the sampling cadence."""
    rate_per_min = config.sampling_rate_hz * 60.0
    horizon = field.t_span[1]
    road_end = field.x_span[1]
    # integration substeps per sampling interval, at least as fine as the field grid
    n_sub = max(1, int(np.ceil((1.0 / rate_per_min) / field.dt)))
    rng = np.random.default_rng([config.seed, 2, pid])
    max_n = int(np.ceil((horizon - spawn) * rate_per_min)) + 2
    rho_noise = config.noise_rho_std * rng.standard_normal(max_n)
    v_noise = config.noise_v_std_kmh * rng.standard_normal(max_n)
    rho_at = _scalar_sampler(field)
    vf_of = freeflow.value_kmh
    t_list, x_list, v_list, r_list = [], [], [], []
    x = 0.0
    k = 0
    while True:
        # sample instants are computed by division, not accumulation, so the
        # same nominal times recur exactly across runs and windows
        t_k = spawn + k / rate_per_min
        if t_k >= horizon or x >= road_end:
            break
        rho_true = rho_at(t_k, x)
        vf_kmh = vf_of(t_k)
        v_meas = vf_kmh * (1.0 - rho_true) + v_noise[k]
        rho_meas = rho_true + rho_noise[k]
        t_list.append(t_k)
        x_list.append(x)
        v_list.append(v_meas if v_meas > 0.0 else 0.0)
        r_list.append(0.0 if rho_meas < 0.0 else (1.0 if rho_meas > 1.0 else rho_meas))
        t_next = spawn + (k + 1) / rate_per_min
        if t_next >= horizon:
            break
        dt_sub = (t_next - t_k) / n_sub
        # first substep reuses the density just measured at (t_k, x)
        x = x + dt_sub * (vf_kmh / 60.0) * (1.0 - rho_true)
        if x > road_end:
            x = road_end
        for j in range(1, n_sub):
            tt = t_k + j * dt_sub
            x = x + dt_sub * (vf_of(tt) / 60.0) * (1.0 - rho_at(tt, x))
            if x > road_end:
                x = road_end
        k += 1
    if not t_list:
        return None
    return ProbeTrajectory(pid, np.array(t_list), np.array(x_list), np.array(v_list), np.array(r_list))


def run_fleet(field, freeflow, config):
    """Simulate every probe over the field and pool their trajectories."""
    spawns = _spawn_times(config, field.t_span[1])
    trajectories = []
    for pid, spawn in enumerate(spawns):
        tr = _run_probe(pid, spawn, field, freeflow, config)
        if tr is not None:
            trajectories.append(tr)
    return ProbeDataset(tuple(trajectories))


def write_probes_csv(dataset, path):
    """Write samples as ``t_min,probe_id,x_km,v_kmh,rho`` rows, one per sample."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_PROBE_HEADER)
        for tr in dataset.trajectories:
            for i in range(tr.n_samples):
                writer.writerow(
                    [
                        repr(float(tr.t[i])),
                        str(int(tr.probe_id)),
                        repr(float(tr.x[i])),
                        repr(float(tr.v_kmh[i])),
                        repr(float(tr.rho[i])),
                    ]
                )


def read_probes_csv(path):
    """Read a probe CSV back into a dataset, validating invariants per line."""
    groups = {}
    order = []
    last_seen = {}
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read probe file {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _PROBE_HEADER:
            raise DataError(
                f"{path}:1: expected header {','.join(_PROBE_HEADER)}, "
                f"got {','.join(header) if header else 'empty file'}"
            )
        for lineno, parts in enumerate(reader, start=2):
            if not parts:
                continue
            if len(parts) != 5:
                raise DataError(f"{path}:{lineno}: expected 5 columns, got {len(parts)}")
            try:
                t = float(parts[0])
                pid = int(parts[1])
                x = float(parts[2])
                v = float(parts[3])
                rho = float(parts[4])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if not 0.0 <= rho <= 1.0:
                raise DataError(f"{path}:{lineno}: density {rho} outside [0, 1]")
            if v < 0.0:
                raise DataError(f"{path}:{lineno}: negative speed {v}")
            if pid in last_seen:
                t_prev, x_prev = last_seen[pid]
                if t <= t_prev:
                    raise DataError(f"{path}:{lineno}: probe {pid} time not increasing")
                if x < x_prev:
                    raise DataError(f"{path}:{lineno}: probe {pid} position decreased")
            else:
                order.append(pid)
                groups[pid] = ([], [], [], [])
            last_seen[pid] = (t, x)
            cols = groups[pid]
            cols[0].append(t)
            cols[1].append(x)
            cols[2].append(v)
            cols[3].append(rho)
    trajectories = tuple(
        ProbeTrajectory(pid, np.array(groups[pid][0]), np.array(groups[pid][1]),
                        np.array(groups[pid][2]), np.array(groups[pid][3]))
        for pid in order
    )
    return ProbeDataset(trajectories)
