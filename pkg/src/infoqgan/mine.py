"""Donsker-Varadhan mutual information estimation with a statistic network.

The estimate for a batch is ``mean T(c, x) - log mean exp T(c', x)`` where the
marginal pairs reuse the generator outputs ``x`` with the codes shuffled.
Network gradients replace the marginal denominator by an exponential moving
average to reduce small-batch bias; the reported estimate is always the plain
batch value.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import nn
from .nn import DenseNet, TrainingError


def as_columns(a) -> np.ndarray:
    """Float array of shape (n, k); 1-D input becomes a single column."""
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


@dataclass
class MineBatch:
    """Joint pairs ``(codes[i], outputs[i])`` and marginal pairs
    ``(shuffled_codes[i], outputs[i])``."""

    codes: np.ndarray
    outputs: np.ndarray
    shuffled_codes: np.ndarray

    def __post_init__(self):
        self.codes = as_columns(self.codes)
        self.outputs = as_columns(self.outputs)
        self.shuffled_codes = as_columns(self.shuffled_codes)
        n = len(self.codes)
        if n < 2:
            raise ValueError(f"MINE batch needs at least 2 pairs, got {n}")
        if len(self.outputs) != n or self.shuffled_codes.shape != self.codes.shape:
            raise ValueError("joint and marginal parts must have equal length")

    def __len__(self):
        return len(self.codes)

    @property
    def joint(self) -> np.ndarray:
        return np.hstack([self.codes, self.outputs])

    @property
    def marginal(self) -> np.ndarray:
        return np.hstack([self.shuffled_codes, self.outputs])


@dataclass
class EmaState:
    ema: float = 0.0
    decay: float = 0.99
    initialized: bool = False

    def __post_init__(self):
        if not 0 < self.decay < 1:
            raise ValueError("EMA decay must lie strictly between 0 and 1")

    def update(self, batch_mean: float) -> float:
        if self.initialized:
            self.ema = self.decay * self.ema + (1 - self.decay) * batch_mean
        else:
            self.ema, self.initialized = batch_mean, True
        return self.ema


def shuffle_marginal(codes, outputs, rng) -> MineBatch:
    codes = as_columns(codes)
    if len(codes) < 2:
        raise ValueError("need at least 2 pairs to build a marginal batch")
    return MineBatch(codes, outputs, codes[rng.permutation(len(codes))])


def log_mean_exp(values) -> float:
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise ValueError("log_mean_exp of an empty array")
    return float(logsumexp(values) - np.log(values.size))


def dv_estimate(T: DenseNet, batch: MineBatch) -> float:
    t_joint = nn.forward(T, batch.joint)[:, 0]
    t_marg = nn.forward(T, batch.marginal)[:, 0]
    return float(np.mean(t_joint) - log_mean_exp(t_marg))


def mine_step(T, batch, ema):
    n = len(batch)
    code_dim = batch.codes.shape[1]
    t_joint = nn.forward(T, batch.joint)[:, 0]
    t_marg = nn.forward(T, batch.marginal)[:, 0]
    lme = log_mean_exp(t_marg)
    batch_mean = np.exp(lme)
    if not np.isfinite(batch_mean):
        raise TrainingError("mine", "mean of exp(T) overflowed")
    ema.update(float(batch_mean))

    # d/dT_marg of mean(e^T)/ema; the plain log-mean-exp weights differ from
    # these only by the constant factor ema/batch_mean
    w_ema = np.exp(t_marg - np.log(n) - np.log(ema.ema))
    g_joint, in_joint = nn.backward(T, batch.joint, np.full((n, 1), 1.0 / n))
    g_marg, in_marg = nn.backward(T, batch.marginal, -w_ema[:, None])
    param_grads = [a + b for a, b in zip(g_joint, g_marg)]
    output_grads = in_joint[:, code_dim:] + in_marg[:, code_dim:] * np.exp(np.log(ema.ema) - lme)
    estimate = float(np.mean(t_joint) - lme)
    return param_grads, output_grads, estimate


def mine_gradients(T: DenseNet, batch: MineBatch, ema: EmaState):
    """Ascent gradients of the DV objective.

    Returns ``(param_grads, output_grads, ema)``. ``param_grads`` follows
    ``T.parameters()`` and uses the EMA denominator; ``output_grads`` is
    (n, output_dim), the gradient of the plain batch estimate with respect to
    each generator output (it enters both the joint and the marginal term).
    """
    param_grads, output_grads, _ = mine_step(T, batch, ema)
    return param_grads, output_grads, ema


def fit_mine(codes, outputs, rng, steps=2000, batch_size=512, lr=1e-3,
             hidden=64, decay=0.99, net=None):
    """Train a statistic network on paired samples; returns ``(net, history)``.

    ``history`` holds the per-step batch estimates.
    """
    codes, outputs = as_columns(codes), as_columns(outputs)
    if net is None:
        net = DenseNet.init([codes.shape[1] + outputs.shape[1], hidden, hidden, 1], rng)
    params = net.parameters()
    adam = nn.AdamState.zeros_like(params)
    ema = EmaState(decay=decay)
    history = []
    n = len(codes)
    for _ in range(steps):
        idx = rng.choice(n, size=min(batch_size, n), replace=False)
        batch = shuffle_marginal(codes[idx], outputs[idx], rng)
        grads, _, estimate = mine_step(net, batch, ema)
        history.append(estimate)
        params, adam = nn.adam_step(params, [-g for g in grads], adam, lr, "mine")
        net.set_parameters(params)
    return net, history
