"""Scikit-learn style facade over the online estimator and the baseline.

Both classes follow the usual conventions: constructor arguments are stored
verbatim, ``fit`` consumes measurement rows and sets trailing-underscore
attributes, ``predict`` maps ``(t_min, x_km)`` query rows to densities.
Queries no snapshot can serve come back as NaN rather than raising, so
mixed-time batches stay usable.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import as_measurement_array, as_query_array
from .domain import sample_field
from .errors import DomainError, EstimateUnavailableError
from .observer import ObserverConfig, propagate
from .online import OnlineConfig, evaluate, run_online, snapshot_index
from .training import TrainerConfig


class OnlinePinnEstimator(BaseEstimator):
    """Sliding-window physics-informed density estimator.

    Parameters
    ----------
    road_length_km, horizon_min, viscosity : float
        Geometry of the modelled road and its density dynamics.  When
        ``horizon_min`` is None, the horizon is the largest measurement time.
    dt_window, lookback : float
        Window step and trailing data span, in minutes.
    epochs, n_colloc, lr_params, lr_vf, lr_lambda, velocity_window : optimiser
        Hyperparameters passed through to the per-window training loop.
    width, n_layers : int
        Hidden width and affine layer count of the density network.
    vf_init_kmh : float
        Initial free-flow speed guess for the identification.
    velocity_mode : str
        ``"greenshield_learnable"`` or ``"learned_closure"``.
    warm_start : bool
        Re-use the previous window's parameters, shifted into the new frame.
    seed : int
        Governs every random stream of the run.
    """

    def __init__(self, road_length_km=5.0, horizon_min=None, viscosity=0.005,
                 dt_window=0.3, lookback=3.0, epochs=100, n_colloc=1000,
                 lr_params=1e-3, lr_vf=1e-2, lr_lambda=1e-2, velocity_window=3.0,
                 width=32, n_layers=2, vf_init_kmh=30.0,
                 velocity_mode="greenshield_learnable", warm_start=True, seed=0):
        self.road_length_km = road_length_km
        self.horizon_min = horizon_min
        self.viscosity = viscosity
        self.dt_window = dt_window
        self.lookback = lookback
        self.epochs = epochs
        self.n_colloc = n_colloc
        self.lr_params = lr_params
        self.lr_vf = lr_vf
        self.lr_lambda = lr_lambda
        self.velocity_window = velocity_window
        self.width = width
        self.n_layers = n_layers
        self.vf_init_kmh = vf_init_kmh
        self.velocity_mode = velocity_mode
        self.warm_start = warm_start
        self.seed = seed

    def _online_config(self):
        trainer = TrainerConfig(
            epochs=self.epochs, n_colloc=self.n_colloc, lr_params=self.lr_params,
            lr_vf=self.lr_vf, lr_lambda=self.lr_lambda,
            velocity_fit_window=self.velocity_window, seed=self.seed,
        )
        return OnlineConfig(
            dt_window=self.dt_window, lookback=self.lookback, trainer=trainer,
            warm_start=self.warm_start, hidden_width=self.width,
            n_layers=self.n_layers, vf_init_kmh=self.vf_init_kmh,
            velocity_mode=self.velocity_mode, seed=self.seed,
        )

    def fit(self, X, y=None):
        """Run the windowed schedule over measurement rows.

        ``X`` is an ``(n, 4)`` array of ``(t_min, x_km, v_kmh, rho)`` rows or
        a :class:`ProbeDataset`; ``y`` is ignored.
        """
        arr = as_measurement_array(X)
        horizon = self.horizon_min
        if horizon is None:
            horizon = float(arr[:, 0].max()) if arr.size else 0.0
        result = run_online(arr, self._online_config(), self.road_length_km,
                            horizon, self.viscosity)
        self.result_ = result
        self.snapshots_ = result.by_index
        self.n_windows_ = len(result.snapshots)
        self.vf_trace_ = np.array([(s.valid_from, s.vf_kmh) for s in result.snapshots])
        self.vf_kmh_ = result.snapshots[-1].vf_kmh if result.snapshots else float("nan")
        return self

    def predict(self, X):
        """Density estimates at ``(t_min, x_km)`` rows; NaN where unavailable."""
        check_is_fitted(self, "snapshots_")
        queries = as_query_array(X)
        out = np.empty(queries.shape[0])
        for k, (t, x) in enumerate(queries):
            try:
                out[k] = evaluate(self.snapshots_, float(t), float(x))
            except EstimateUnavailableError:
                out[k] = np.nan
        return out

    def available_from(self):
        """Earliest time any snapshot serves."""
        check_is_fitted(self, "snapshots_")
        if not self.snapshots_:
            return float("inf")
        return (min(self.snapshots_) + 1) * self.dt_window

    def window_of(self, t):
        """Index of the snapshot that serves time ``t``."""
        return snapshot_index(t, self.dt_window)


class OpenLoopObserver(BaseEstimator):
    """Propagate-and-inject baseline with a fixed assumed free-flow speed."""

    def __init__(self, road_length_km=5.0, horizon_min=None, viscosity=0.005,
                 assumed_vf_kmh=37.5, injection_radius=1, nx=200,
                 output_dt_min=0.02):
        self.road_length_km = road_length_km
        self.horizon_min = horizon_min
        self.viscosity = viscosity
        self.assumed_vf_kmh = assumed_vf_kmh
        self.injection_radius = injection_radius
        self.nx = nx
        self.output_dt_min = output_dt_min

    def fit(self, X, y=None):
        """Propagate over measurement rows ``(t_min, x_km, rho)`` (or 4-column
        rows including speed, or a :class:`ProbeDataset`); ``y`` is ignored."""
        raw = None if hasattr(X, "trajectories") else np.asarray(X, dtype=float)
        if raw is not None and raw.ndim == 2 and raw.shape[1] == 4:
            arr = as_measurement_array(raw)[:, [0, 1, 3]]
        else:
            arr = as_measurement_array(X, n_columns=3)
        horizon = self.horizon_min
        if horizon is None:
            horizon = float(arr[:, 0].max()) if arr.size else 1.0
        positions = np.linspace(0.0, self.road_length_km, self.nx + 1)
        n_out = max(1, round(horizon / self.output_dt_min))
        times = np.linspace(0.0, horizon, n_out + 1)
        config = ObserverConfig(self.assumed_vf_kmh, self.injection_radius)
        self.field_ = propagate(arr, positions, times, self.viscosity, config)
        return self

    def predict(self, X):
        """Bilinear samples of the propagated field at ``(t_min, x_km)`` rows."""
        check_is_fitted(self, "field_")
        queries = as_query_array(X)
        out = np.empty(queries.shape[0])
        for k, (t, x) in enumerate(queries):
            try:
                out[k] = sample_field(self.field_, float(t), float(x))
            except DomainError:
                out[k] = np.nan
        return out
