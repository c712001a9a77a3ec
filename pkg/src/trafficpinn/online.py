"""Sliding-window retraining schedule and stitched density estimates.

Window ``i`` trains at time ``i * dt`` on the trailing lookback of probe
measurements and serves queries on ``[(i+1)*dt, (i+2)*dt)``: while one
network is being fitted, the previous one extrapolates.  Warm starts re-use
the previous window's parameters after re-expressing them in the new time
frame; the first usable estimate exists from ``2 * dt`` onward.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .domain import cee, kmmin_to_kmh
from .errors import ConfigError, DataError, DomainError, EstimateUnavailableError
from .net import InputScaler, MlpParams, forward, init_params, time_shift
from .probes import ProbeDataset
from .training import (
    LagrangeWeights,
    TrainerConfig,
    TrainState,
    VelocityModel,
    WindowSpec,
    fresh_state,
    train_window,
)
from .autodiff import Tensor

_METRICS_HEADER = [
    "t_min", "cee_pinn", "cee_observer", "vf_true_kmh", "vf_learned_kmh",
    "window_index", "train_seconds",
]

# tolerance when snapping t / dt onto window boundaries
_INDEX_SNAP = 1e-9


@dataclass(frozen=True)
class OnlineConfig:
    """Schedule geometry, network size, and run mode for the online estimator.

    The single ``seed`` governs every random stream of a run (initialisation
    and collocation sampling); the nested trainer seed is derived from it.
    ``time_scale`` is wall-clock seconds per simulated minute and only
    matters in realtime mode.
    """

    dt_window: float = 0.3
    lookback: float = 3.0
    trainer: TrainerConfig = TrainerConfig()
    warm_start: bool = True
    hidden_width: int = 32
    n_layers: int = 2
    vf_init_kmh: float = 30.0
    velocity_mode: str = "greenshield_learnable"
    mode: str = "replay"
    time_scale: float = 60.0
    seed: int = 0

    def __post_init__(self):
        if self.dt_window <= 0:
            raise ConfigError("dt_window must be positive")
        if self.lookback <= self.dt_window:
            raise ConfigError("lookback must exceed dt_window")
        if self.trainer.velocity_fit_window > self.lookback + 1e-12:
            raise ConfigError("velocity fit window cannot exceed the lookback")
        if self.mode not in ("replay", "realtime"):
            raise ConfigError(f"mode must be 'replay' or 'realtime', got {self.mode!r}")
        if self.time_scale <= 0:
            raise ConfigError("time_scale must be positive")
        if self.hidden_width < 1 or self.n_layers < 1:
            raise ConfigError("network size must be positive")


@dataclass(frozen=True)
class EstimateSnapshot:
    """Frozen outcome of one training window."""

    index: int
    state: TrainState
    scaler: InputScaler
    valid_from: float
    valid_until: float
    train_seconds: float
    n_data: int
    n_velocity: int
    data_starved: bool
    vf_stale: bool
    vf_kmh: float


def snapshot_index(t, dt_window):
    """Index of the snapshot serving time ``t`` (may be below the first one)."""
    return int(np.floor(t / dt_window + _INDEX_SNAP)) - 1


def evaluate(snapshots, t, x):
    """Stitched density estimate at time ``t`` and position(s) ``x``.

    ``snapshots`` is a mapping or sequence of :class:`EstimateSnapshot`;
    validity intervals are half-open, so a boundary time selects the next
    window.  Raises :class:`EstimateUnavailableError` before the first
    window or over a skipped one.
    """
    by_index = snapshots if isinstance(snapshots, dict) else {s.index: s for s in snapshots}
    if not by_index:
        raise EstimateUnavailableError("no trained snapshots")
    dt_window = next(iter(by_index.values())).scaler.dt_window
    idx = snapshot_index(t, dt_window)
    first = min(by_index)
    if idx < first:
        raise EstimateUnavailableError(
            f"no estimate before t = {(first + 1) * dt_window} (queried {t})"
        )
    snap = by_index.get(idx)
    if snap is None:
        raise EstimateUnavailableError(f"no snapshot covers t = {t} (window {idx})")
    xx = np.atleast_1d(np.asarray(x, dtype=float))
    inputs = np.column_stack([
        np.broadcast_to(snap.scaler.scale_time(t), xx.shape),
        snap.scaler.scale_space(xx),
    ])
    out = forward(snap.state.density, inputs).data.ravel()
    return float(out[0]) if np.isscalar(x) else out


@dataclass
class MetricsRow:
    """One scored instant of a run."""

    t_min: float
    cee_pinn: float
    cee_observer: float
    vf_true_kmh: float
    vf_learned_kmh: float
    window_index: int
    train_seconds: float


@dataclass
class OnlineResult:
    """Snapshots, per-time metrics, and bookkeeping of one schedule run."""

    snapshots: list
    dt_window: float
    metrics: list = field(default_factory=list)
    cost_records: list = field(default_factory=list)
    overruns: list = field(default_factory=list)

    @property
    def by_index(self):
        return {s.index: s for s in self.snapshots}

    def estimate(self, t, x):
        return evaluate(self.by_index, t, x)


def _measurement_array(probes):
    if isinstance(probes, ProbeDataset):
        return probes.as_array()
    arr = np.asarray(probes, dtype=float)
    if arr.size == 0:
        return np.empty((0, 4))
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise DataError(f"measurements must be (n, 4) (t, x, v_kmh, rho) rows, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError("measurements must be finite")
    return arr


def _warm_started(prev, steps, config):
    """Carry the previous state into a later window, shifting the time frame."""
    state = prev.copy()
    density = state.density
    for _ in range(steps):
        density = time_shift(density, config.dt_window, config.lookback)
    return TrainState(density, state.velocity, state.weights)


def run_online(probes, config, road_length_km, horizon_min, gamma,
               truth=None, freeflow=None):
    """Run the full windowed schedule over a measurement record.

    ``probes`` is a :class:`ProbeDataset` or an ``(n, 4)`` measurement array.
    When ``truth`` is given, per-time error metrics are computed on its grid
    from the first valid estimate time onward; ``freeflow`` additionally
    fills the true free-flow column.  In realtime mode training is paced by
    the wall clock and late windows are skipped and recorded.
    """
    if road_length_km <= 0 or horizon_min <= 0:
        raise DomainError("road length and horizon must be positive")
    arr = _measurement_array(probes)
    if arr.size and (arr[:, 0].min() < -1e-9 or arr[:, 0].max() > horizon_min + 1e-9):
        raise DataError("measurement times fall outside the run horizon")
    dt = config.dt_window
    trainer = replace(config.trainer, seed=config.seed)
    i_max = snapshot_index(horizon_min, dt)
    realtime = config.mode == "realtime"
    scale_s = config.time_scale
    result = OnlineResult([], dt)
    state = None
    prev_index = None
    wall_start = time.perf_counter()
    i = 1
    while i <= i_max:
        t_train = i * dt
        if realtime:
            ready_at = wall_start + t_train * scale_s
            now = time.perf_counter()
            if now < ready_at:
                time.sleep(ready_at - now)
        t1 = max(0.0, t_train - config.lookback)
        mask = (arr[:, 0] >= t1) & (arr[:, 0] <= t_train)
        meas = arr[mask]
        scaler = InputScaler(i, dt, config.lookback, road_length_km)
        if state is None or not config.warm_start:
            state = fresh_state(config.hidden_width, config.n_layers, config.vf_init_kmh,
                                config.velocity_mode, seed=[config.seed, 10, i])
        else:
            state = _warm_started(state, i - prev_index, config)
        window = WindowSpec(t1, t_train, 2.0 * dt)
        report = train_window(state, meas, window, scaler, trainer, gamma)
        result.snapshots.append(EstimateSnapshot(
            index=i,
            state=state.copy(),
            scaler=scaler,
            valid_from=(i + 1) * dt,
            valid_until=(i + 2) * dt,
            train_seconds=report.duration_s,
            n_data=report.n_data,
            n_velocity=report.n_velocity,
            data_starved=report.data_starved,
            vf_stale=report.vf_stale,
            vf_kmh=state.velocity.vf_kmh(),
        ))
        result.cost_records.append(
            (trainer.n_colloc, report.n_data, trainer.epochs, report.duration_s)
        )
        prev_index = i
        if realtime:
            elapsed_min = (time.perf_counter() - wall_start) / scale_s
            current = int(np.floor(elapsed_min / dt + _INDEX_SNAP))
            if current > i + 1:
                # training overran its slot; skip to the freshest window
                result.overruns.append((i, (current - i - 1) * dt))
                i = current
                continue
        i += 1
    if truth is not None:
        result.metrics = _score_run(result, truth, freeflow)
    return result


def _score_run(result, truth, freeflow):
    by_index = result.by_index
    if not by_index:
        return []
    first_t = (min(by_index) + 1) * result.dt_window
    rows = []
    for t in truth.times:
        t = float(t)
        if t < first_t - 1e-12:
            continue
        idx = snapshot_index(t, result.dt_window)
        snap = by_index.get(idx)
        if snap is None:
            rows.append(MetricsRow(t, float("nan"), float("nan"),
                                   freeflow.value_kmh(t) if freeflow else float("nan"),
                                   float("nan"), idx, float("nan")))
            continue
        err = cee(truth, lambda tt, xx: evaluate(by_index, tt, xx), t)
        rows.append(MetricsRow(
            t, err, float("nan"),
            freeflow.value_kmh(t) if freeflow else float("nan"),
            snap.vf_kmh, idx, snap.train_seconds,
        ))
    return rows


@dataclass(frozen=True)
class TrainingCostModel:
    """Linear model of window training time in collocation and data sizes."""

    alpha: float
    beta: float

    def predict_seconds(self, epochs, n_colloc, n_data):
        return epochs * (self.alpha * n_colloc + self.beta * n_data)


def fit_cost_model(records):
    """Least-squares fit of the cost model from measured window runs.

    ``records`` are ``(n_colloc, n_data, epochs, duration_s)`` tuples; at
    least two linearly independent rows are required.  Coefficients are
    clamped to be non-negative.
    """
    rows = [(float(nc), float(nd), float(e), float(d)) for nc, nd, e, d in records]
    if len(rows) < 2:
        raise DataError("need at least two cost records")
    design = np.array([[e * nc, e * nd] for nc, nd, e, _ in rows])
    target = np.array([d for _, _, _, d in rows])
    if np.linalg.matrix_rank(design) < 2:
        raise DataError("cost records are rank deficient; vary the window sizes")
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    return TrainingCostModel(alpha=max(0.0, float(coef[0])), beta=max(0.0, float(coef[1])))


def write_metrics_csv(rows, path):
    """Write per-time metric rows as CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_METRICS_HEADER)
        for r in rows:
            writer.writerow([
                repr(float(r.t_min)), repr(float(r.cee_pinn)), repr(float(r.cee_observer)),
                repr(float(r.vf_true_kmh)), repr(float(r.vf_learned_kmh)),
                str(int(r.window_index)), repr(float(r.train_seconds)),
            ])


def save_snapshots(result, path):
    """Write every snapshot of a run into one ``.npz`` checkpoint."""
    arrays = {
        "dt_window": np.array(result.dt_window),
        "indices": np.array([s.index for s in result.snapshots], dtype=np.int64),
    }
    for s in result.snapshots:
        tag = f"s{s.index:05d}"
        p = s.state.density
        arrays[f"{tag}/head"] = np.array(p.head)
        arrays[f"{tag}/n_layers"] = np.array(p.n_layers)
        for j, (w, b) in enumerate(zip(p.weights, p.biases)):
            arrays[f"{tag}/w{j}"] = w.data
            arrays[f"{tag}/b{j}"] = b.data
        arrays[f"{tag}/vf_raw"] = np.asarray(s.state.velocity.vf_raw.data)
        arrays[f"{tag}/mode"] = np.array(s.state.velocity.mode)
        if s.state.velocity.psi is not None:
            psi = s.state.velocity.psi
            arrays[f"{tag}/psi_n"] = np.array(psi.n_layers)
            for j, (w, b) in enumerate(zip(psi.weights, psi.biases)):
                arrays[f"{tag}/pw{j}"] = w.data
                arrays[f"{tag}/pb{j}"] = b.data
        arrays[f"{tag}/lambda"] = np.array(s.state.weights.as_floats())
        arrays[f"{tag}/meta"] = np.array([
            s.scaler.dt_window, s.scaler.lookback, s.scaler.road_length,
            s.valid_from, s.valid_until, s.train_seconds, s.vf_kmh,
            float(s.n_data), float(s.n_velocity),
            float(s.data_starved), float(s.vf_stale),
        ])
    np.savez(path, **arrays)


def load_snapshots(path):
    """Reload snapshots written by :func:`save_snapshots`."""
    snapshots = []
    with np.load(path, allow_pickle=False) as data:
        dt_window = float(data["dt_window"])
        for idx in data["indices"]:
            idx = int(idx)
            tag = f"s{idx:05d}"
            n = int(data[f"{tag}/n_layers"])
            weights = [Tensor(data[f"{tag}/w{j}"], requires_grad=True) for j in range(n)]
            biases = [Tensor(data[f"{tag}/b{j}"], requires_grad=True) for j in range(n)]
            density = MlpParams(weights, biases, str(data[f"{tag}/head"]))
            mode = str(data[f"{tag}/mode"])
            psi = None
            if f"{tag}/psi_n" in data:
                pn = int(data[f"{tag}/psi_n"])
                psi = MlpParams(
                    [Tensor(data[f"{tag}/pw{j}"], requires_grad=True) for j in range(pn)],
                    [Tensor(data[f"{tag}/pb{j}"], requires_grad=True) for j in range(pn)],
                    "identity",
                )
            velocity = VelocityModel(mode, Tensor(data[f"{tag}/vf_raw"], requires_grad=True), psi)
            lam = data[f"{tag}/lambda"]
            weights_l = LagrangeWeights(Tensor(float(lam[0]), requires_grad=True),
                                        Tensor(float(lam[1]), requires_grad=True))
            meta = data[f"{tag}/meta"]
            scaler = InputScaler(idx, float(meta[0]), float(meta[1]), float(meta[2]))
            snapshots.append(EstimateSnapshot(
                index=idx,
                state=TrainState(density, velocity, weights_l),
                scaler=scaler,
                valid_from=float(meta[3]),
                valid_until=float(meta[4]),
                train_seconds=float(meta[5]),
                vf_kmh=float(meta[6]),
                n_data=int(meta[7]),
                n_velocity=int(meta[8]),
                data_starved=bool(meta[9]),
                vf_stale=bool(meta[10]),
            ))
    result = OnlineResult(snapshots, dt_window)
    return result
