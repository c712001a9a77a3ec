"""Road geometry, gridded density fields, speed closures, and error metrics.

Unit conventions used throughout the package: time in minutes, space in
kilometres, speeds in km/min internally.  Speeds cross public interfaces in
km/h and are converted on entry and exit.  Densities are normalised by the
jam density, so every density lives in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

KMH_PER_KMMIN = 60.0

# Interpolation weights this close to a grid node snap onto it, so queries at
# nominal node coordinates return stored values even after float round-trips.
_NODE_SNAP = 1e-9


def kmh_to_kmmin(speed_kmh):
    """Convert km/h to the internal km/min unit."""
    return speed_kmh / KMH_PER_KMMIN


def kmmin_to_kmh(speed_kmmin):
    """Convert the internal km/min unit back to km/h."""
    return speed_kmmin * KMH_PER_KMMIN


@dataclass(frozen=True)
class RoadDomain:
    """A single road stretch with a simulation horizon and viscosity.

    Attributes
    ----------
    length_km : float
        Road length, strictly positive.
    horizon_min : float
        Simulated time horizon in minutes, strictly positive.
    viscosity : float
        Diffusion coefficient of the density dynamics, in (0, 0.1].
    """

    length_km: float = 5.0
    horizon_min: float = 30.0
    viscosity: float = 0.005

    def __post_init__(self):
        if not self.length_km > 0:
            raise DomainError(f"length_km must be positive, got {self.length_km}")
        if not self.horizon_min > 0:
            raise DomainError(f"horizon_min must be positive, got {self.horizon_min}")
        if not 0 < self.viscosity <= 0.1:
            raise DomainError(f"viscosity must be in (0, 0.1], got {self.viscosity}")


@dataclass(frozen=True)
class FreeFlowSchedule:
    """Piecewise-constant free-flow speed over time.

    ``segments`` is an ordered tuple of ``(start_min, speed_kmh)`` pairs; each
    speed holds from its start until the next segment begins.  The first start
    must be 0 and starts must be strictly increasing.
    """

    segments: tuple[tuple[float, float], ...]

    def __post_init__(self):
        segs = tuple((float(t), float(v)) for t, v in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise DomainError("schedule needs at least one segment")
        if segs[0][0] != 0.0:
            raise DomainError(f"first segment must start at 0, got {segs[0][0]}")
        starts = [t for t, _ in segs]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise DomainError("segment starts must be strictly increasing")
        if any(v <= 0 for _, v in segs):
            raise DomainError("free-flow speeds must be positive")

    @classmethod
    def constant(cls, speed_kmh):
        return cls(((0.0, float(speed_kmh)),))

    def value_kmh(self, t):
        """Free-flow speed in km/h at time(s) ``t``; scalar in, scalar out."""
        starts = np.array([s for s, _ in self.segments])
        speeds = np.array([v for _, v in self.segments])
        idx = np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(starts) - 1)
        out = speeds[idx]
        return float(out) if np.isscalar(t) else out

    def value_kmmin(self, t):
        return kmh_to_kmmin(self.value_kmh(t))

    def max_kmh(self):
        return max(v for _, v in self.segments)


def _uniform_spacing(arr, name):
    if arr.ndim != 1 or arr.size < 2:
        raise DomainError(f"{name} must be a 1-d array with at least two entries")
    steps = np.diff(arr)
    if steps[0] <= 0 or not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
        raise DomainError(f"{name} must be uniformly increasing")
    return (arr[-1] - arr[0]) / (arr.size - 1)


@dataclass(frozen=True)
class DensityField:
    """Normalised density on a uniform space-time grid.

    ``values[i, j]`` is the density at ``times[i]``, ``positions[j]``; every
    value lies in [0, 1].  Arrays are made read-only at construction.
    """

    times: np.ndarray
    positions: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        positions = np.asarray(self.positions, dtype=float)
        values = np.asarray(self.values, dtype=float)
        _uniform_spacing(times, "times")
        _uniform_spacing(positions, "positions")
        if values.shape != (times.size, positions.size):
            raise DomainError(
                f"values shape {values.shape} does not match grid "
                f"({times.size}, {positions.size})"
            )
        if not np.all(np.isfinite(values)):
            raise DomainError("field values must be finite")
        if values.min() < 0.0 or values.max() > 1.0:
            raise DomainError("field values must lie in [0, 1]")
        for arr in (times, positions, values):
            arr.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "values", values)

    @property
    def dt(self):
        return _uniform_spacing(self.times, "times")

    @property
    def dx(self):
        return _uniform_spacing(self.positions, "positions")

    @property
    def t_span(self):
        return float(self.times[0]), float(self.times[-1])

    @property
    def x_span(self):
        return float(self.positions[0]), float(self.positions[-1])


@dataclass(frozen=True)
class EvalGrid:
    """Times and positions on which an estimate is scored against truth."""

    times: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        positions = np.asarray(self.positions, dtype=float)
        if times.ndim != 1 or positions.ndim != 1:
            raise DomainError("grid axes must be 1-d arrays")
        if times.size == 0 or positions.size == 0:
            raise DomainError("grid axes must be non-empty")
        if np.any(np.diff(times) <= 0) or np.any(np.diff(positions) <= 0):
            raise DomainError("grid axes must be strictly increasing")
        times.flags.writeable = False
        positions.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "positions", positions)

    @classmethod
    def from_field(cls, field, t_start=None):
        times = field.times
        if t_start is not None:
            times = times[times >= t_start - 1e-12]
        return cls(times, field.positions)


def _axis_index(coords, values, spacing):
    """Continuous fractional index of ``values`` along a uniform axis."""
    u = (np.asarray(values, dtype=float) - coords[0]) / spacing
    snapped = np.rint(u)
    u = np.where(np.abs(u - snapped) < _NODE_SNAP, snapped, u)
    lo = np.clip(np.floor(u).astype(int), 0, coords.size - 2)
    return lo, u - lo


def sample_field(field, t, x):
    """Bilinearly interpolate ``field`` at time ``t`` and position(s) ``x``.

    Queries exactly on grid nodes return the stored values.  Coordinates
    outside the grid raise :class:`DomainError`.
    """
    tt = np.asarray(t, dtype=float)
    xx = np.asarray(x, dtype=float)
    t0, t1 = field.t_span
    x0, x1 = field.x_span
    pad_t = _NODE_SNAP * max(1.0, abs(t1))
    pad_x = _NODE_SNAP * max(1.0, abs(x1))
    if np.any(tt < t0 - pad_t) or np.any(tt > t1 + pad_t):
        raise DomainError(f"time query outside [{t0}, {t1}]")
    if np.any(xx < x0 - pad_x) or np.any(xx > x1 + pad_x):
        raise DomainError(f"position query outside [{x0}, {x1}]")
    it, wt = _axis_index(field.times, tt, field.dt)
    ix, wx = _axis_index(field.positions, xx, field.dx)
    wt = np.clip(wt, 0.0, 1.0)
    wx = np.clip(wx, 0.0, 1.0)
    v = field.values
    out = (
        (1.0 - wt) * (1.0 - wx) * v[it, ix]
        + (1.0 - wt) * wx * v[it, ix + 1]
        + wt * (1.0 - wx) * v[it + 1, ix]
        + wt * wx * v[it + 1, ix + 1]
    )
    if np.isscalar(t) and np.isscalar(x):
        return float(out)
    return out


def greenshield_velocity(rho, vf):
    """Linear speed closure ``vf * (1 - rho)``; units follow ``vf``."""
    rho_arr = np.asarray(rho, dtype=float)
    if np.any(rho_arr < 0.0) or np.any(rho_arr > 1.0):
        raise DomainError("density must lie in [0, 1]")
    out = vf * (1.0 - rho_arr)
    return float(out) if np.isscalar(rho) else out


def cee(truth, estimate, t):
    """Spatial integral of the squared density misfit at time ``t``.

    ``estimate`` is a callable ``(t, x_array) -> density_array``; the integral
    runs over the truth grid with the trapezoid rule.
    """
    t0, t1 = truth.t_span
    if not t0 - 1e-12 <= t <= t1 + 1e-12:
        raise DomainError(f"metric time {t} outside truth span [{t0}, {t1}]")
    x = truth.positions
    true_row = sample_field(truth, t, x)
    est_row = np.asarray(estimate(t, x), dtype=float)
    if est_row.shape != x.shape:
        raise DomainError("estimate callable must return one value per position")
    return float(np.trapezoid((true_row - est_row) ** 2, x))
