"""Small numpy feed-forward nets with hand-written backprop, Adam and step decay."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEAKY_SLOPE = 0.01
HIDDEN_ACTIVATIONS = ("leaky_relu", "tanh")
OUTPUT_ACTIVATIONS = ("sigmoid", "identity")


class ShapeError(ValueError):
    pass


class TrainingError(RuntimeError):
    """Non-finite values appeared during an optimization step."""

    def __init__(self, component, message):
        super().__init__(f"{component}: {message}")
        self.component = component
        self.message = message


def leaky_relu(x):
    return np.where(x > 0, x, LEAKY_SLOPE * x)


def sigmoid(x):
    # split by sign so neither branch overflows
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1 / (1 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1 + ex)
    return out


@dataclass
class DenseNet:
    layer_dims: list
    weights: list
    biases: list
    hidden_activation: str = "leaky_relu"
    output_activation: str = "identity"

    def __post_init__(self):
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")
        self.layer_dims = [int(d) for d in self.layer_dims]
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise ShapeError("need one weight matrix and bias per layer transition")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            want = (self.layer_dims[k + 1], self.layer_dims[k])
            if w.shape != want or b.shape != (want[0],):
                raise ShapeError(f"layer {k}: weight {w.shape}, bias {b.shape}, expected {want}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {k} has non-finite weights")

    @classmethod
    def init(cls, layer_dims, rng, hidden_activation="leaky_relu", output_activation="identity"):
        """Weights and biases uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]."""
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            bound = 1 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, (fan_out, fan_in)))
            biases.append(rng.uniform(-bound, bound, fan_out))
        return cls(list(layer_dims), weights, biases, hidden_activation, output_activation)

    def parameters(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def set_parameters(self, params):
        self.weights = [np.asarray(p, dtype=float) for p in params[0::2]]
        self.biases = [np.asarray(p, dtype=float) for p in params[1::2]]

    def to_dict(self) -> dict:
        return {"layer_dims": self.layer_dims,
                "hidden_activation": self.hidden_activation,
                "output_activation": self.output_activation,
                "weights": [w.tolist() for w in self.weights],
                "biases": [b.tolist() for b in self.biases]}

    @classmethod
    def from_dict(cls, d) -> "DenseNet":
        return cls(d["layer_dims"], d["weights"], d["biases"],
                   d["hidden_activation"], d["output_activation"])


def discriminator_net(input_dim, rng) -> DenseNet:
    return DenseNet.init([input_dim, 64, 64, 1], rng, "leaky_relu", "sigmoid")


def statistic_net(code_dim, output_dim, rng) -> DenseNet:
    return DenseNet.init([code_dim + output_dim, 64, 64, 1], rng, "leaky_relu", "identity")


def _as_batch(net, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != net.layer_dims[0]:
        raise ShapeError(f"input width {x.shape[1]} != {net.layer_dims[0]}")
    return x, single


def _forward_cache(net, x):
    pre, acts = [], [x]
    h = x
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        a = h @ w.T + b
        pre.append(a)
        if k < last:
            h = leaky_relu(a) if net.hidden_activation == "leaky_relu" else np.tanh(a)
        else:
            h = sigmoid(a) if net.output_activation == "sigmoid" else a
        acts.append(h)
    return pre, acts


def forward(net: DenseNet, x) -> np.ndarray:
    """Evaluate on one input vector or a (batch, in) array."""
    x, single = _as_batch(net, x)
    out = _forward_cache(net, x)[1][-1]
    return out[0] if single else out


def backward(net: DenseNet, x, output_grad):
    """Backprop ``output_grad`` (dL/d output) through the net.

    Returns ``(param_grads, input_grad)``: ``param_grads`` is ordered like
    ``net.parameters()`` and summed over the batch; ``input_grad`` has the
    shape of ``x``.
    """
    x, single = _as_batch(net, x)
    g = np.atleast_2d(np.asarray(output_grad, dtype=float))
    if g.shape != (x.shape[0], net.layer_dims[-1]):
        raise ShapeError(f"output_grad shape {g.shape} does not match batch output")
    pre, acts = _forward_cache(net, x)
    last = len(net.weights) - 1
    grads = [None] * (2 * len(net.weights))
    for k in range(last, -1, -1):
        a = pre[k]
        if k == last:
            if net.output_activation == "sigmoid":
                g = g * acts[k + 1] * (1 - acts[k + 1])
        elif net.hidden_activation == "leaky_relu":
            g = g * np.where(a > 0, 1.0, LEAKY_SLOPE)
        else:
            g = g * (1 - acts[k + 1] ** 2)
        grads[2 * k] = g.T @ acts[k]
        grads[2 * k + 1] = g.sum(axis=0)
        g = g @ net.weights[k]
    return grads, (g[0] if single else g)


@dataclass
class AdamState:
    first_moment: list
    second_moment: list
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        params = [np.asarray(p, dtype=float) for p in params]
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])

    def to_dict(self) -> dict:
        return {"first_moment": [np.asarray(m).tolist() for m in self.first_moment],
                "second_moment": [np.asarray(v).tolist() for v in self.second_moment],
                "step_count": self.step_count}


def adam_step(params, grads, state: AdamState, lr, component="adam"):
    """One bias-corrected Adam descent step; returns ``(new_params, new_state)``.

    Inputs are not modified. To ascend, pass negated gradients.
    """
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ShapeError("params, grads and moments must have equal length")
    t = state.step_count + 1
    b1, b2, eps = state.beta1, state.beta2, state.epsilon
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        p, g = np.asarray(p, dtype=float), np.asarray(g, dtype=float)
        if g.shape != p.shape or m.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingError(component, "non-finite gradient")
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        new_p.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(new_m, new_v, t, b1, b2, eps)


@dataclass(frozen=True)
class StepSchedule:
    base_lr: float
    step_size: int = 30
    gamma: float = 1.0

    def __post_init__(self):
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")


def lr_at(schedule: StepSchedule, epoch: int) -> float:
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    return schedule.base_lr * schedule.gamma ** (epoch // schedule.step_size)
