"""Adversarial training of the quantum generator, with or without the MINE term.

Each epoch draws a real minibatch, then updates the discriminator, the
statistic network (InfoQGAN only) and the generator, in that order. The
generator maximizes ``log D(G(z, c)) + beta * MINE(c, G(z, c))``, implemented
as minimizing its negative.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from . import generator as gen
from . import mine, nn
from .nn import StepSchedule, TrainingError

LOG_FLOOR = 1e-12
QGAN = "qgan"
INFOQGAN = "infoqgan"
CHECKPOINT_EVERY = 50
# real samples per optimizer step within an epoch's 25% subset
POINT_MINIBATCH = 10
FINANCE_MINIBATCH = 50

# named rng streams derived from the single run seed
STREAMS = ("data", "init", "batch", "latent", "shuffle", "eval")


def seed_streams(seed: int) -> dict:
    return {name: np.random.default_rng(np.random.SeedSequence([int(seed), k]))
            for k, name in enumerate(STREAMS)}


@dataclass
class TrainConfig:
    mode: str = INFOQGAN
    readout: str = gen.POINT2D
    epochs: int = 300
    layers: int = 20
    noise_dim: int = 3
    code_dim: int = 2
    beta: float = 0.5
    batch_fraction: float = 0.25
    generator_schedule: StepSchedule = StepSchedule(0.001, 30, 0.7)
    discriminator_schedule: StepSchedule = StepSchedule(0.0003, 30, 0.85)
    mine_schedule: StepSchedule = StepSchedule(0.001, 30, 0.7)
    minibatch_size: Optional[int] = POINT_MINIBATCH
    init_scale: float = math.pi
    ema_decay: float = 0.99
    seed: int = 0

    def __post_init__(self):
        if self.mode not in (QGAN, INFOQGAN):
            raise ValueError(f"mode must be {QGAN!r} or {INFOQGAN!r}")
        if self.readout not in gen.READOUTS:
            raise ValueError(f"unknown readout {self.readout!r}")
        if not 0 < self.batch_fraction <= 1:
            raise ValueError("batch_fraction must lie in (0, 1]")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.minibatch_size is not None and self.minibatch_size < 2:
            raise ValueError("minibatch_size must be at least 2")
        if self.mode == INFOQGAN and self.code_dim < 1:
            raise ValueError("infoqgan needs at least one code entry")
        if self.noise_dim < 0 or self.code_dim < 0:
            raise ValueError("latent dimensions must be non-negative")
        for name in ("generator_schedule", "discriminator_schedule", "mine_schedule"):
            value = getattr(self, name)
            if isinstance(value, dict):
                setattr(self, name, StepSchedule(**value))

    @property
    def qubits(self) -> int:
        return self.noise_dim + self.code_dim

    @property
    def uses_mine(self) -> bool:
        return self.mode == INFOQGAN

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochMetrics:
    epoch: int
    generator_loss: float
    discriminator_loss: float
    mine_estimate: float
    lr_g: float
    lr_d: float
    lr_m: float

    CSV_HEADER = ("epoch", "g_loss", "d_loss", "mine_estimate", "lr_g", "lr_d", "lr_m")

    def row(self) -> list:
        return [str(self.epoch)] + [f"{v:.17g}" for v in (
            self.generator_loss, self.discriminator_loss, self.mine_estimate,
            self.lr_g, self.lr_d, self.lr_m)]


@dataclass
class TrainState:
    config: TrainConfig
    generator: gen.GeneratorSpec
    discriminator: nn.DenseNet
    statistic: Optional[nn.DenseNet]
    adam_g: nn.AdamState
    adam_d: nn.AdamState
    adam_m: Optional[nn.AdamState]
    ema: mine.EmaState
    rngs: dict = field(repr=False)

    @classmethod
    def initial(cls, config: TrainConfig, rngs=None) -> "TrainState":
        rngs = rngs if rngs is not None else seed_streams(config.seed)
        init = rngs["init"]
        g = gen.GeneratorSpec.create(config.qubits, config.layers, config.readout,
                                     rng=init, init_scale=config.init_scale)
        d = nn.discriminator_net(g.output_dim, init)
        # drawn in both modes so the two modes share generator/D initialization
        t = nn.statistic_net(max(config.code_dim, 1), g.output_dim, init)
        return cls(config, g, d, t if config.uses_mine else None,
                   nn.AdamState.zeros_like([g.params]),
                   nn.AdamState.zeros_like(d.parameters()),
                   nn.AdamState.zeros_like(t.parameters()) if config.uses_mine else None,
                   mine.EmaState(decay=config.ema_decay), rngs)

    def checkpoint(self, epoch) -> dict:
        out = {"epoch": epoch, "config": self.config.to_dict(),
               "generator": self.generator.to_dict(),
               "discriminator": self.discriminator.to_dict()}
        if self.statistic is not None:
            out["mine"] = self.statistic.to_dict()
        return out


def _clamped_log(x):
    return np.log(np.maximum(x, LOG_FLOOR))


def _dlog(x):
    """Derivative of the clamped log; zero where the floor is active."""
    return np.where(x > LOG_FLOOR, 1.0 / np.maximum(x, LOG_FLOOR), 0.0)


def discriminator_loss(D: nn.DenseNet, real_batch, fake_batch) -> float:
    real_batch, fake_batch = np.atleast_2d(real_batch), np.atleast_2d(fake_batch)
    if len(real_batch) == 0 or len(fake_batch) == 0:
        raise ValueError("discriminator loss needs non-empty batches")
    d_real = nn.forward(D, real_batch)[:, 0]
    d_fake = nn.forward(D, fake_batch)[:, 0]
    return float(-np.mean(_clamped_log(d_real)) - np.mean(_clamped_log(1 - d_fake)))


def discriminator_gradients(D: nn.DenseNet, real_batch, fake_batch):
    d_real = nn.forward(D, real_batch)[:, 0]
    d_fake = nn.forward(D, fake_batch)[:, 0]
    loss = float(-np.mean(_clamped_log(d_real)) - np.mean(_clamped_log(1 - d_fake)))
    g_real, _ = nn.backward(D, real_batch, (-_dlog(d_real) / len(d_real))[:, None])
    g_fake, _ = nn.backward(D, fake_batch, (_dlog(1 - d_fake) / len(d_fake))[:, None])
    return loss, [a + b for a, b in zip(g_real, g_fake)]


def generator_loss(D: nn.DenseNet, fake_batch, mine_term=0.0, beta=0.0) -> float:
    fake_batch = np.atleast_2d(fake_batch)
    if len(fake_batch) == 0:
        raise ValueError("generator loss needs a non-empty batch")
    d_fake = nn.forward(D, fake_batch)[:, 0]
    loss = -np.mean(_clamped_log(d_fake))
    if beta:
        loss -= beta * mine_term
    return float(loss)


def dv_output_gradients(T: nn.DenseNet, batch: mine.MineBatch):
    """Plain DV estimate and its gradient with respect to each output row."""
    n = len(batch)
    code_dim = batch.codes.shape[1]
    t_joint = nn.forward(T, batch.joint)[:, 0]
    t_marg = nn.forward(T, batch.marginal)[:, 0]
    lme = mine.log_mean_exp(t_marg)
    _, in_joint = nn.backward(T, batch.joint, np.full((n, 1), 1.0 / n))
    _, in_marg = nn.backward(T, batch.marginal, -np.exp(t_marg - lme - np.log(n))[:, None])
    return float(np.mean(t_joint) - lme), in_joint[:, code_dim:] + in_marg[:, code_dim:]


def generator_gradient(state: TrainState, z, beta=None):
    """Loss and parameter gradient of the generator objective at latents ``z``.

    The MINE term is evaluated on a fresh code shuffle drawn from the
    ``shuffle`` stream.
    """
    cfg = state.config
    beta = cfg.beta if beta is None else beta
    fake, states = gen.forward_batch(state.generator, z)
    m = len(fake)
    d_fake = nn.forward(state.discriminator, fake)[:, 0]
    loss = -np.mean(_clamped_log(d_fake))
    _, out_grad = nn.backward(state.discriminator, fake, (-_dlog(d_fake) / m)[:, None])
    if cfg.uses_mine and beta:
        batch = mine.shuffle_marginal(z[:, cfg.noise_dim:], fake, state.rngs["shuffle"])
        estimate, dv_grad = dv_output_gradients(state.statistic, batch)
        loss -= beta * estimate
        out_grad = out_grad - beta * dv_grad
    grad = gen.generator_vjp(state.generator, z, out_grad, states)
    return float(loss), grad


def _check_finite(component, value):
    if not np.isfinite(value):
        raise TrainingError(component, f"non-finite loss {value}")


def train_epoch(state: TrainState, dataset, epoch: int) -> EpochMetrics:
    cfg = state.config
    dataset = np.asarray(dataset, dtype=float)
    if len(dataset) == 0:
        raise ValueError("empty training dataset")
    lr_g = nn.lr_at(cfg.generator_schedule, epoch)
    lr_d = nn.lr_at(cfg.discriminator_schedule, epoch)
    lr_m = nn.lr_at(cfg.mine_schedule, epoch) if cfg.uses_mine else 0.0
    subset_size = math.ceil(cfg.batch_fraction * len(dataset))
    subset = state.rngs["batch"].choice(len(dataset), size=subset_size, replace=False)
    step = cfg.minibatch_size or subset_size
    g_losses, d_losses, estimates = [], [], []

    starts = list(range(0, subset_size, step))
    if len(starts) > 1 and subset_size - starts[-1] < 2:
        starts.pop()  # a 1-sample tail joins the previous chunk
    for start, stop in zip(starts, starts[1:] + [subset_size]):
        real = dataset[subset[start:stop]]
        m = len(real)
        z = gen.sample_latents(state.rngs["latent"], m, state.generator)
        fake = gen.generate_batch(state.generator, z)

        d_loss, d_grads = discriminator_gradients(state.discriminator, real, fake)
        _check_finite("discriminator", d_loss)
        params, state.adam_d = nn.adam_step(state.discriminator.parameters(), d_grads,
                                            state.adam_d, lr_d, "discriminator")
        state.discriminator.set_parameters(params)
        d_losses.append(d_loss)

        if cfg.uses_mine:
            batch = mine.shuffle_marginal(z[:, cfg.noise_dim:], fake, state.rngs["shuffle"])
            m_grads, _, estimate = mine.mine_step(state.statistic, batch, state.ema)
            _check_finite("mine", estimate)
            params, state.adam_m = nn.adam_step(state.statistic.parameters(),
                                                [-g for g in m_grads], state.adam_m, lr_m, "mine")
            state.statistic.set_parameters(params)
            estimates.append(estimate)

        z = gen.sample_latents(state.rngs["latent"], m, state.generator)
        g_loss, g_grad = generator_gradient(state, z)
        _check_finite("generator", g_loss)
        (new_params,), state.adam_g = nn.adam_step([state.generator.params], [g_grad],
                                                   state.adam_g, lr_g, "generator")
        state.generator.params = new_params
        g_losses.append(g_loss)

    return EpochMetrics(epoch, float(np.mean(g_losses)), float(np.mean(d_losses)),
                        float(np.mean(estimates)) if estimates else 0.0, lr_g, lr_d, lr_m)


def write_json_atomic(path, obj):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(obj, fh)
    os.replace(tmp, path)


def train(config: TrainConfig, dataset, out_dir=None, state=None, progress=None):
    """Run all epochs; returns ``(state, history)``.

    With ``out_dir`` set, ``checkpoint_XXXX.json`` files are written for the
    initial state, every 50 epochs and the final epoch.
    """
    state = state if state is not None else TrainState.initial(config)
    history = []

    def save(epoch):
        if out_dir is not None:
            write_json_atomic(os.path.join(out_dir, f"checkpoint_{epoch:04d}.json"),
                              state.checkpoint(epoch))

    save(0)
    for epoch in range(config.epochs):
        try:
            metrics = train_epoch(state, dataset, epoch)
        except TrainingError as exc:
            raise TrainingError(exc.component, f"epoch {epoch}: {exc.message}") from exc
        history.append(metrics)
        if progress is not None:
            progress(state, metrics)
        done = epoch + 1
        if done % CHECKPOINT_EVERY == 0 or done == config.epochs:
            save(done)
    return state, history


def with_overrides(config: TrainConfig, **changes) -> TrainConfig:
    return replace(config, **changes)
