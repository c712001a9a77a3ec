"""Dense tanh network, its input-derivative jets, and window rescaling.

The density network maps scaled ``(time, space)`` inputs through tanh hidden
layers to a sigmoid head, so outputs always lie in (0, 1).  First and second
input derivatives propagate layer by layer alongside the values, using the
closed forms tanh' = 1 - tanh^2 and sigmoid' = s(1 - s); every intermediate
stays on the autodiff tape, so parameter gradients of the derivatives are
exact as well.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, sigmoid, tanh
from .errors import ConfigError, DomainError

_HEADS = ("sigmoid", "identity")
# input column order for the density network: scaled time first, then space
TIME_COLUMN = 0


@dataclass
class MlpParams:
    """Weights and biases of a dense network plus its output head."""

    weights: list
    biases: list
    head: str

    def __post_init__(self):
        if self.head not in _HEADS:
            raise ConfigError(f"head must be one of {_HEADS}, got {self.head!r}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ConfigError("weights and biases must be non-empty and aligned")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.data.ndim != 2 or b.data.ndim != 1:
                raise ConfigError(f"layer {i}: weight must be 2-d, bias 1-d")
            if w.data.shape[1] != b.data.shape[0]:
                raise ConfigError(f"layer {i}: bias length {b.data.shape[0]} "
                                  f"does not match fan-out {w.data.shape[1]}")
            if i > 0 and self.weights[i - 1].data.shape[1] != w.data.shape[0]:
                raise ConfigError(f"layer {i}: fan-in does not chain")
            if not (np.all(np.isfinite(w.data)) and np.all(np.isfinite(b.data))):
                raise ConfigError(f"layer {i}: parameters must be finite")

    @property
    def n_layers(self):
        return len(self.weights)

    @property
    def layer_sizes(self):
        sizes = [self.weights[0].data.shape[0]]
        sizes.extend(w.data.shape[1] for w in self.weights)
        return tuple(sizes)

    def parameters(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self):
        return MlpParams(
            [Tensor(w.data.copy(), requires_grad=True) for w in self.weights],
            [Tensor(b.data.copy(), requires_grad=True) for b in self.biases],
            self.head,
        )


def init_params(layer_sizes, head="sigmoid", seed=0):
    """Glorot-uniform weights and zero biases for the given layer widths."""
    if len(layer_sizes) < 2:
        raise ConfigError("need at least an input and an output width")
    if any(int(s) < 1 for s in layer_sizes):
        raise ConfigError("layer widths must be positive")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes, layer_sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(Tensor(rng.uniform(-limit, limit, (fan_in, fan_out)), requires_grad=True))
        biases.append(Tensor(np.zeros(fan_out), requires_grad=True))
    return MlpParams(weights, biases, head)


@dataclass(frozen=True)
class InputScaler:
    """Affine map from window-relative physical coordinates onto [-1, 1].

    For window ``i`` with step ``dt_window`` and lookback ``lookback``, times
    in ``[i*dt - lookback, (i+2)*dt]`` scale onto [-1, 1]; positions scale by
    road length.
    """

    window_index: int
    dt_window: float
    lookback: float
    road_length: float

    def __post_init__(self):
        if not 0 < self.dt_window < self.lookback:
            raise DomainError(
                f"need 0 < dt_window < lookback, got {self.dt_window}, {self.lookback}"
            )
        if self.road_length <= 0:
            raise DomainError("road_length must be positive")

    @property
    def time_factor(self):
        """d(scaled time) / d(physical time)."""
        return 2.0 / (2.0 * self.dt_window + self.lookback)

    @property
    def space_factor(self):
        """d(scaled space) / d(physical space)."""
        return 2.0 / self.road_length

    def scale_time(self, t):
        i = self.window_index
        center = (i + 1.0) * self.dt_window - self.lookback / 2.0
        return self.time_factor * (np.asarray(t, dtype=float) - center)

    def scale_space(self, x):
        return self.space_factor * np.asarray(x, dtype=float) - 1.0

    @property
    def time_span(self):
        """Physical times mapping onto [-1, 1]."""
        i = self.window_index
        return (i * self.dt_window - self.lookback, (i + 2.0) * self.dt_window)


def shift_constant(dt_window, lookback):
    """Scaled-time offset between the frames of consecutive windows."""
    return 2.0 * dt_window / (2.0 * dt_window + lookback)


def time_shift(params, dt_window, lookback):
    """Re-express a trained network in the next window's time frame.

    Only the first-layer bias changes: absorbing the scaled-time offset keeps
    the function of physical time identical, which is what makes warm starts
    exact.
    """
    shifted = params.copy()
    delta = shift_constant(dt_window, lookback)
    w_time = shifted.weights[0].data[TIME_COLUMN, :]
    shifted.biases[0] = Tensor(shifted.biases[0].data + w_time * delta, requires_grad=True)
    return shifted


def _as_input_tensor(params, inputs):
    t = inputs if isinstance(inputs, Tensor) else Tensor(np.atleast_2d(np.asarray(inputs, float)))
    if t.data.ndim != 2 or t.data.shape[1] != params.weights[0].data.shape[0]:
        raise ConfigError(
            f"input width {t.data.shape} does not match network fan-in "
            f"{params.weights[0].data.shape[0]}"
        )
    return t


def forward(params, inputs):
    """Evaluate the network on ``(n, fan_in)`` inputs; returns an ``(n, 1)`` tensor."""
    a = _as_input_tensor(params, inputs)
    last = params.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        a = a @ w + b
        if i < last:
            a = tanh(a)
    if params.head == "sigmoid":
        a = sigmoid(a)
    return a


def forward_jet(params, inputs, d_first, d_second=None):
    """Evaluate the network together with first and second input derivatives.

    ``d_first`` holds one directional seed per input column (``(n, fan_in)``),
    ``d_second`` the second-order seed (zero for affine coordinate maps).
    Returns tensors ``(value, d1, d2)`` of shape ``(n, 1)``, all on the tape.
    """
    a = _as_input_tensor(params, inputs)
    a1 = Tensor(np.asarray(d_first, dtype=float))
    a2 = Tensor(np.zeros_like(a.data) if d_second is None else np.asarray(d_second, float))
    last = params.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w + b
        z1 = a1 @ w
        z2 = a2 @ w
        if i < last:
            h = tanh(z)
            h_p = 1.0 - h * h
            h_pp = -2.0 * h * h_p
            a = h
            a1 = h_p * z1
            a2 = h_pp * z1 * z1 + h_p * z2
        else:
            a, a1, a2 = z, z1, z2
    if params.head == "sigmoid":
        s = sigmoid(a)
        s_p = s * (1.0 - s)
        s_pp = s_p * (1.0 - 2.0 * s)
        return s, s_p * a1, s_pp * a1 * a1 + s_p * a2
    return a, a1, a2


def density_jet(params, scaler, t, x):
    """Density value, time derivative, and space derivatives at ``(t, x)``.

    ``t`` and ``x`` are physical coordinates (arrays of equal length); the
    chain rule through the affine scaler turns scaled-input derivatives into
    physical ones.  Returns tape tensors ``(value, d_t, d_x, d_xx)`` of shape
    ``(n, 1)``.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if t.shape != x.shape:
        raise DomainError("t and x must have matching shapes")
    inputs = np.column_stack([scaler.scale_time(t), scaler.scale_space(x)])
    n = t.size
    seed_t = np.zeros((n, 2))
    seed_t[:, TIME_COLUMN] = 1.0
    seed_x = np.zeros((n, 2))
    seed_x[:, 1 - TIME_COLUMN] = 1.0
    # one shared forward pass carrying the time tangent and the space jet
    a = _as_input_tensor(params, inputs)
    at = Tensor(seed_t)
    ax = Tensor(seed_x)
    axx = Tensor(np.zeros((n, 2)))
    last = params.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w + b
        zt = at @ w
        zx = ax @ w
        zxx = axx @ w
        if i < last:
            h = tanh(z)
            h_p = 1.0 - h * h
            h_pp = -2.0 * h * h_p
            a = h
            at = h_p * zt
            ax = h_p * zx
            axx = h_pp * zx * zx + h_p * zxx
        else:
            a, at, ax, axx = z, zt, zx, zxx
    if params.head == "sigmoid":
        s = sigmoid(a)
        s_p = s * (1.0 - s)
        s_pp = s_p * (1.0 - 2.0 * s)
        a, at, ax, axx = s, s_p * at, s_p * ax, s_pp * ax * ax + s_p * axx

    a_t = scaler.time_factor
    a_x = scaler.space_factor
    return a, a_t * at, a_x * ax, (a_x * a_x) * axx


@dataclass(frozen=True)
class Jet:
    """Pointwise density estimate with its first and second derivatives."""

    value: float
    d_t: float
    d_x: float
    d_xx: float


def input_jet(params, scaler, t, x):
    """Scalar convenience wrapper around :func:`density_jet`."""
    value, d_t, d_x, d_xx = density_jet(params, scaler, float(t), float(x))
    return Jet(float(value.data[0, 0]), float(d_t.data[0, 0]),
               float(d_x.data[0, 0]), float(d_xx.data[0, 0]))


def value_and_slope(params, rho):
    """Network output and its derivative in the single input ``rho``.

    ``rho`` may be a tape tensor of shape ``(n, 1)``; gradients then flow both
    to the network parameters and through ``rho`` itself.
    """
    rho_t = rho if isinstance(rho, Tensor) else Tensor(np.asarray(rho, float).reshape(-1, 1))
    ones = np.ones_like(rho_t.data)
    value, slope, _ = forward_jet(params, rho_t, ones)
    return value, slope


def param_gradients(params, loss_fn):
    """Exact gradients of a scalar loss closure, shaped like the parameters."""
    tensors = params.parameters()
    for p in tensors:
        p.grad = None
        p.requires_grad = True
    loss = loss_fn(params)
    if not np.isfinite(loss.data):
        raise ValueError("loss is not finite")
    loss.backward()
    return [np.zeros_like(p.data) if p.grad is None else np.array(p.grad) for p in tensors]


def save_params(params, path):
    """Write parameters to an ``.npz`` checkpoint, bit-exact on reload."""
    arrays = {"head": np.array(params.head), "n_layers": np.array(params.n_layers)}
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        arrays[f"w{i}"] = w.data
        arrays[f"b{i}"] = b.data
    np.savez(path, **arrays)


def load_params(path):
    """Reload a checkpoint written by :func:`save_params`."""
    with np.load(path, allow_pickle=False) as data:
        n = int(data["n_layers"])
        head = str(data["head"])
        weights = [Tensor(data[f"w{i}"], requires_grad=True) for i in range(n)]
        biases = [Tensor(data[f"b{i}"], requires_grad=True) for i in range(n)]
    return MlpParams(weights, biases, head)
