"""Losses, speed closures, and the windowed adversarial training loop.

One training call fits the density network to the measurements in a sliding
window while a physics penalty, weighted by adaptive Lagrange multipliers,
pushes the estimate toward the traffic PDE on a freshly sampled collocation
cloud each epoch.  Network parameters descend with Adam; the multipliers rise
by plain gradient ascent and are clamped to configured bounds.
"""

from __future__ import annotations

import csv
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, relu, softplus, zero_grads
from .domain import kmh_to_kmmin, kmmin_to_kmh
from .errors import ConfigError, DomainError, TrainingError
from .net import MlpParams, density_jet, forward, init_params, value_and_slope

_TRACE_HEADER = ["epoch", "data_loss", "physics_loss", "lambda_pde", "lambda_mono", "vf_kmh"]


def _seed_list(seed):
    """Normalise an int or sequence seed into a flat list of ints."""
    return [int(seed)] if np.isscalar(seed) else [int(s) for s in seed]


def _inverse_softplus(y):
    if y <= 0:
        raise DomainError(f"softplus output must be positive, got {y}")
    # log(expm1(y)), stable for large y
    return float(y + np.log(-np.expm1(-y))) if y > 20 else float(np.log(np.expm1(y)))


@dataclass
class VelocityModel:
    """Speed closure with a learnable free-flow speed.

    ``greenshield_learnable`` is the linear closure ``vf * (1 - rho)`` with
    ``vf`` the only free parameter.  ``learned_closure`` multiplies in a
    squared network correction, ``(1 - rho) * (vf + rho * N(rho)^2)``, which
    keeps the speed at jam density exactly zero and at zero density at least
    ``vf``.  ``vf`` is stored through a softplus so it stays positive.
    """

    mode: str
    vf_raw: Tensor
    psi: MlpParams | None = None

    MODES = ("greenshield_learnable", "learned_closure")

    @classmethod
    def create(cls, mode, vf_init_kmh, closure_width=16, seed=0):
        if mode not in cls.MODES:
            raise ConfigError(f"velocity mode must be one of {cls.MODES}, got {mode!r}")
        raw = Tensor(_inverse_softplus(kmh_to_kmmin(vf_init_kmh)), requires_grad=True)
        psi = None
        if mode == "learned_closure":
            psi = init_params((1, closure_width, 1), head="identity", seed=_seed_list(seed) + [7])
        return cls(mode, raw, psi)

    def vf_kmmin(self):
        """Current free-flow speed as a scalar tape tensor, km/min."""
        return softplus(self.vf_raw)

    def vf_kmh(self):
        return kmmin_to_kmh(float(np.logaddexp(0.0, self.vf_raw.data)))

    def parameters(self):
        out = [self.vf_raw]
        if self.psi is not None:
            out.extend(self.psi.parameters())
        return out

    def network_parameters(self):
        return [] if self.psi is None else self.psi.parameters()

    def copy(self):
        raw = Tensor(np.array(self.vf_raw.data, copy=True), requires_grad=True)
        return VelocityModel(self.mode, raw, None if self.psi is None else self.psi.copy())


def _velocity_terms(model, rho_t):
    """Tape-valued speed and its density derivative at densities ``rho_t``."""
    vf = model.vf_kmmin()
    ones = Tensor(np.ones_like(rho_t.data))
    if model.mode == "greenshield_learnable":
        value = vf * (ones - rho_t)
        slope = (-1.0) * vf * ones
        return value, slope
    n_val, n_slope = value_and_slope(model.psi, rho_t)
    boost = n_val * n_val
    inner = vf + rho_t * boost
    value = (ones - rho_t) * inner
    slope = (-1.0) * inner + (ones - rho_t) * (boost + 2.0 * rho_t * n_val * n_slope)
    return value, slope


def velocity_eval(model, rho):
    """Speed and its density derivative at ``rho``, in km/min.

    Accepts scalars or arrays in [0, 1]; raises :class:`DomainError` outside.
    """
    rho_arr = np.atleast_1d(np.asarray(rho, dtype=float))
    if np.any(rho_arr < 0.0) or np.any(rho_arr > 1.0):
        raise DomainError("density must lie in [0, 1]")
    value, slope = _velocity_terms(model, Tensor(rho_arr.reshape(-1, 1)))
    v = value.data.ravel()
    dv = np.broadcast_to(slope.data, value.data.shape).ravel()
    if np.isscalar(rho):
        return float(v[0]), float(dv[0])
    return v.reshape(np.shape(rho)), dv.reshape(np.shape(rho))


def physics_residual(jet, model, gamma):
    """Pointwise PDE residual and monotonicity violation for one density jet."""
    v, dv = velocity_eval(model, jet.value)
    r_pde = jet.d_t + (v + jet.value * dv) * jet.d_x - gamma * jet.d_xx
    return float(r_pde), float(max(dv, 0.0))


@dataclass
class LagrangeWeights:
    """Adaptive non-negative multipliers for the physics penalties."""

    pde: Tensor
    mono: Tensor

    @classmethod
    def ones(cls):
        return cls(Tensor(1.0, requires_grad=True), Tensor(1.0, requires_grad=True))

    def copy(self):
        return LagrangeWeights(
            Tensor(np.array(self.pde.data, copy=True), requires_grad=True),
            Tensor(np.array(self.mono.data, copy=True), requires_grad=True),
        )

    def as_floats(self):
        return float(self.pde.data), float(self.mono.data)


@dataclass(frozen=True)
class CollocationSet:
    """Unstructured points where the PDE residual is evaluated."""

    t: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        x = np.asarray(self.x, dtype=float)
        if t.shape != x.shape or t.ndim != 1 or t.size == 0:
            raise DomainError("collocation t and x must be matching non-empty 1-d arrays")
        t.flags.writeable = False
        x.flags.writeable = False
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)

    @property
    def n_points(self):
        return self.t.size


def sample_collocation(t1, t2, delta, road_length, n, seed=0):
    """Uniform collocation cloud over ``[t1, t2 + delta] x [0, road_length]``."""
    if t1 > t2:
        raise DomainError(f"collocation window start {t1} after end {t2}")
    if delta < 0 or road_length <= 0 or n < 1:
        raise DomainError("need delta >= 0, positive road length, n >= 1")
    rng = np.random.default_rng(seed)
    t = rng.uniform(t1, t2 + delta, n)
    x = rng.uniform(0.0, road_length, n)
    return CollocationSet(t, x)


def data_loss(params, model, scaler, measurements, velocity_window):
    """Summed squared misfit on density plus speed measurements.

    ``measurements`` is an ``(n, 4)`` array of ``(t_min, x_km, v_kmh, rho)``
    rows.  The density term covers every row; the speed term only rows inside
    ``velocity_window``, comparing the closure at the measured density with
    the measured speed.  Empty input warns and contributes zero.
    """
    meas = np.asarray(measurements, dtype=float)
    if meas.size == 0:
        warnings.warn("no measurements in training window; data loss is zero", RuntimeWarning)
        return Tensor(0.0)
    if meas.ndim != 2 or meas.shape[1] != 4:
        raise DomainError(f"measurements must be (n, 4), got {meas.shape}")
    t, x, v_kmh, rho = meas.T
    inputs = np.column_stack([scaler.scale_time(t), scaler.scale_space(x)])
    pred = forward(params, inputs)
    resid = pred - rho.reshape(-1, 1)
    loss = (resid * resid).sum()
    lo, hi = velocity_window
    vmask = (t >= lo) & (t <= hi)
    if vmask.any():
        v_pred, _ = _velocity_terms(model, Tensor(rho[vmask].reshape(-1, 1)))
        v_resid = v_pred - kmh_to_kmmin(v_kmh[vmask]).reshape(-1, 1)
        loss = loss + (v_resid * v_resid).sum()
    return loss


def physics_loss(params, model, scaler, colloc, weights, gamma):
    """Multiplier-weighted mean squared PDE and monotonicity residuals."""
    value, d_t, d_x, d_xx = density_jet(params, scaler, colloc.t, colloc.x)
    v, dv = _velocity_terms(model, value)
    r_pde = d_t + (v + value * dv) * d_x - gamma * d_xx
    r_mono = relu(dv)
    n = float(colloc.n_points)
    return (weights.pde * (r_pde * r_pde).sum() + weights.mono * (r_mono * r_mono).sum()) / n


@dataclass(frozen=True)
class TrainerConfig:
    """Optimisation hyperparameters for one training window."""

    epochs: int = 100
    n_colloc: int = 1000
    lr_params: float = 1e-3
    lr_vf: float = 1e-2
    lr_lambda: float = 1e-2
    lambda_min: float = 1e-3
    lambda_max: float = 1e3
    velocity_fit_window: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.n_colloc < 1:
            raise ConfigError("n_colloc must be at least 1")
        for name in ("lr_params", "lr_vf", "lr_lambda", "velocity_fit_window"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.lambda_min <= self.lambda_max:
            raise ConfigError("need 0 < lambda_min <= lambda_max")


@dataclass(frozen=True)
class WindowSpec:
    """Data window ``[t1, t2]`` with collocation extended to ``t2 + delta``."""

    t1: float
    t2: float
    delta: float

    def __post_init__(self):
        if self.t1 > self.t2:
            raise DomainError(f"window start {self.t1} after end {self.t2}")
        if self.delta < 0:
            raise DomainError("delta must be non-negative")


class Adam:
    """Adaptive-moment descent over a list of tape tensors."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g
            m_hat = self.m[i] / (1.0 - b1**self.t)
            v_hat = self.v[i] / (1.0 - b2**self.t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class TrainState:
    """Everything the optimiser updates: density net, closure, multipliers."""

    density: MlpParams
    velocity: VelocityModel
    weights: LagrangeWeights

    def copy(self):
        return TrainState(self.density.copy(), self.velocity.copy(), self.weights.copy())


def fresh_state(hidden_width=32, n_layers=2, vf_init_kmh=30.0,
                velocity_mode="greenshield_learnable", seed=0):
    """Freshly initialised training state for a two-input density network."""
    if n_layers < 1:
        raise ConfigError("n_layers must be at least 1")
    base = _seed_list(seed)
    sizes = (2, *([hidden_width] * (n_layers - 1)), 1)
    density = init_params(sizes, head="sigmoid", seed=base + [5])
    velocity = VelocityModel.create(velocity_mode, vf_init_kmh, seed=base)
    return TrainState(density, velocity, LagrangeWeights.ones())


@dataclass
class TrainReport:
    """Result of one training window."""

    state: TrainState
    trace: list = field(default_factory=list)
    n_data: int = 0
    n_velocity: int = 0
    data_starved: bool = False
    vf_stale: bool = False
    duration_s: float = 0.0


def train_window(state, measurements, window, scaler, config, gamma):
    """Run the adversarial loop for one window and return a report.

    ``measurements`` must already be restricted to ``[window.t1, window.t2]``.
    The state is updated in place; the report references it.  The free-flow
    speed is frozen whenever no speed measurement falls inside the velocity
    fit window, and a non-finite loss aborts with the trace attached.
    """
    if measurements is None:
        meas = np.empty((0, 4))
    else:
        meas = np.asarray(measurements, dtype=float)
        meas = meas.reshape(-1, 4) if meas.size else np.empty((0, 4))
    started = time.perf_counter()
    v_window = (window.t2 - config.velocity_fit_window, window.t2)
    if meas.size:
        n_velocity = int(np.count_nonzero((meas[:, 0] >= v_window[0]) & (meas[:, 0] <= v_window[1])))
    else:
        n_velocity = 0
    report = TrainReport(
        state,
        n_data=int(meas.shape[0]),
        n_velocity=n_velocity,
        data_starved=meas.shape[0] == 0,
        vf_stale=n_velocity == 0,
    )
    leaves = (
        state.density.parameters()
        + state.velocity.parameters()
        + [state.weights.pde, state.weights.mono]
    )
    for leaf in leaves:
        leaf.requires_grad = True
    adam_net = Adam(state.density.parameters() + state.velocity.network_parameters(),
                    config.lr_params)
    adam_vf = Adam([state.velocity.vf_raw], config.lr_vf)
    for epoch in range(config.epochs):
        zero_grads(leaves)
        colloc = sample_collocation(
            window.t1, window.t2, window.delta, scaler.road_length,
            config.n_colloc, seed=[config.seed, scaler.window_index, epoch],
        )
        with warnings.catch_warnings():
            if report.data_starved:
                warnings.simplefilter("ignore", RuntimeWarning)
            ld = data_loss(state.density, state.velocity, scaler, meas, v_window)
        lp = physics_loss(state.density, state.velocity, scaler, colloc, state.weights, gamma)
        total = ld + lp
        if not np.isfinite(total.data):
            raise TrainingError(
                f"non-finite loss at epoch {epoch} of window {scaler.window_index}",
                trace=report.trace,
            )
        total.backward()
        adam_net.step()
        if not report.vf_stale:
            adam_vf.step()
        for mult in (state.weights.pde, state.weights.mono):
            g = 0.0 if mult.grad is None else mult.grad
            mult.data = np.clip(mult.data + config.lr_lambda * g,
                                config.lambda_min, config.lambda_max)
        lam_pde, lam_mono = state.weights.as_floats()
        report.trace.append(
            (epoch, float(ld.data), float(lp.data), lam_pde, lam_mono, state.velocity.vf_kmh())
        )
    report.duration_s = time.perf_counter() - started
    return report


def identify_vf(state):
    """Current free-flow speed estimate in km/h."""
    return state.velocity.vf_kmh()


def write_loss_trace(trace, path):
    """Write per-epoch loss rows as CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_TRACE_HEADER)
        for row in trace:
            writer.writerow([str(int(row[0]))] + [repr(float(v)) for v in row[1:]])
