import copy
import json

import numpy as np
import pytest

from infoqgan import generator as gen
from infoqgan import mine, nn, targets, training
from infoqgan.nn import StepSchedule


def tiny_config(**kw):
    base = dict(mode=training.INFOQGAN, epochs=3, layers=1, noise_dim=1, code_dim=2,
                beta=0.5, minibatch_size=10, seed=3)
    base.update(kw)
    return training.TrainConfig(**base)


def tiny_data(n=40, seed=0):
    return targets.biased_circle(n, np.random.default_rng(seed)).points


def test_seed_streams_are_reproducible_and_distinct():
    a, b = training.seed_streams(5), training.seed_streams(5)
    assert set(a) == set(training.STREAMS)
    draws = {k: a[k].random() for k in a}
    assert draws == {k: b[k].random() for k in b}
    assert len(set(draws.values())) == len(draws)
    assert training.seed_streams(6)["data"].random() != training.seed_streams(5)["data"].random()


def test_default_config_values():
    cfg = training.TrainConfig()
    assert (cfg.epochs, cfg.layers, cfg.qubits, cfg.beta) == (300, 20, 5, 0.5)
    assert cfg.discriminator_schedule == StepSchedule(0.0003, 30, 0.85)


@pytest.mark.parametrize("kw", [dict(mode="gan"), dict(batch_fraction=0.0), dict(beta=-1.0),
                                dict(minibatch_size=1), dict(code_dim=0), dict(epochs=-1)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        tiny_config(**kw)


def test_schedule_tables_become_schedules():
    cfg = tiny_config(generator_schedule={"base_lr": 0.01, "step_size": 10, "gamma": 0.5})
    assert cfg.generator_schedule == StepSchedule(0.01, 10, 0.5)


def test_discriminator_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    d = nn.discriminator_net(2, rng)
    real, fake = rng.uniform(size=(6, 2)), rng.uniform(size=(5, 2))
    loss, grads = training.discriminator_gradients(d, real, fake)
    assert loss == pytest.approx(training.discriminator_loss(d, real, fake))
    params = [p.copy() for p in d.parameters()]
    h = 1e-6
    for k in (0, 3, 5):
        for idx in list(np.ndindex(params[k].shape))[:4]:
            vals = []
            for sign in (1, -1):
                trial = [p.copy() for p in params]
                trial[k][idx] += sign * h
                d.set_parameters(trial)
                vals.append(training.discriminator_loss(d, real, fake))
            assert grads[k][idx] == pytest.approx((vals[0] - vals[1]) / (2 * h), rel=1e-4, abs=1e-8)
    d.set_parameters(params)


def test_generator_gradient_matches_finite_differences():
    cfg = tiny_config(layers=2)
    state = training.TrainState.initial(cfg)
    z = gen.sample_latents(np.random.default_rng(1), 8, state.generator)
    shuffle_copy = copy.deepcopy(state.rngs["shuffle"])
    loss, grad = training.generator_gradient(state, z)
    perm = shuffle_copy.permutation(8)
    codes = z[:, cfg.noise_dim:]

    def objective(params):
        state.generator.params = params
        fake = gen.generate_batch(state.generator, z)
        dv = mine.dv_estimate(state.statistic, mine.MineBatch(codes, fake, codes[perm]))
        return training.generator_loss(state.discriminator, fake, dv, cfg.beta)

    base = state.generator.params.copy()
    assert objective(base) == pytest.approx(loss)
    h = 1e-6
    for i in range(len(base)):
        e = np.zeros_like(base)
        e[i] = h
        fd = (objective(base + e) - objective(base - e)) / (2 * h)
        assert grad[i] == pytest.approx(fd, rel=1e-4, abs=1e-8)
    state.generator.params = base


def test_generator_loss_formula():
    d = nn.DenseNet([2, 1], [np.zeros((1, 2))], [np.zeros(1)], output_activation="sigmoid")
    # D = 0.5 everywhere
    assert training.generator_loss(d, np.zeros((3, 2))) == pytest.approx(np.log(2))
    assert training.generator_loss(d, np.zeros((3, 2)), 0.4, 0.5) == pytest.approx(np.log(2) - 0.2)


def test_train_writes_checkpoints_and_is_deterministic(tmp_path):
    cfg = tiny_config()
    data = tiny_data()
    state, hist = training.train(cfg, data, out_dir=tmp_path)
    assert [m.epoch for m in hist] == [0, 1, 2]
    assert sorted(p.name for p in tmp_path.glob("checkpoint_*.json")) == [
        "checkpoint_0000.json", "checkpoint_0003.json"]
    ckpt = json.loads((tmp_path / "checkpoint_0003.json").read_text())
    assert set(ckpt) == {"epoch", "config", "generator", "discriminator", "mine"}
    np.testing.assert_array_equal(gen.GeneratorSpec.from_dict(ckpt["generator"]).params,
                                  state.generator.params)
    _, hist2 = training.train(cfg, data)
    assert [m.row() for m in hist] == [m.row() for m in hist2]


def test_learning_rates_follow_schedules():
    cfg = tiny_config(epochs=2, generator_schedule=StepSchedule(0.01, 1, 0.5))
    _, hist = training.train(cfg, tiny_data())
    assert [m.lr_g for m in hist] == [0.01, 0.005]


def test_qgan_mode_skips_mine():
    cfg = tiny_config(mode=training.QGAN, noise_dim=3, code_dim=0)
    state, hist = training.train(cfg, tiny_data())
    assert state.statistic is None
    assert all(m.mine_estimate == 0.0 and m.lr_m == 0.0 for m in hist)


def test_both_modes_share_generator_initialization():
    q = training.TrainState.initial(tiny_config(mode=training.QGAN, noise_dim=3, code_dim=0))
    i = training.TrainState.initial(tiny_config(noise_dim=1, code_dim=2))
    np.testing.assert_array_equal(q.generator.params, i.generator.params)


def test_subset_uses_a_quarter_of_the_data(monkeypatch):
    seen = []
    real_step = training.discriminator_gradients

    def spy(d, real, fake):
        seen.append(len(real))
        return real_step(d, real, fake)

    monkeypatch.setattr(training, "discriminator_gradients", spy)
    training.train(tiny_config(epochs=1, minibatch_size=4), tiny_data(n=50))
    assert sum(seen) == 13
    assert seen == [4, 4, 5]


def test_non_finite_values_report_epoch():
    cfg = tiny_config(epochs=1)
    state = training.TrainState.initial(cfg)
    params = state.discriminator.parameters()
    params[0] = np.full_like(params[0], np.nan)
    state.discriminator.set_parameters(params)
    with pytest.raises(nn.TrainingError, match="epoch 0") as err:
        training.train(cfg, tiny_data(), state=state)
    assert err.value.component == "discriminator"
    assert str(err.value).count("discriminator") == 1


def test_metrics_row_format():
    m = training.EpochMetrics(4, 0.1, 1.0 / 3, 0.0, 1e-3, 3e-4, 0.0)
    assert m.row()[0] == "4"
    assert m.row()[2] == "0.33333333333333331"
