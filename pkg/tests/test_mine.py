import numpy as np
import pytest

from infoqgan import mine, nn


def test_log_mean_exp_is_stable():
    assert mine.log_mean_exp([0.0, 0.0]) == pytest.approx(0.0)
    assert mine.log_mean_exp([1000.0, 1000.0]) == pytest.approx(1000.0)
    assert mine.log_mean_exp([0.0, np.log(3.0)]) == pytest.approx(np.log(2.0))
    with pytest.raises(ValueError):
        mine.log_mean_exp([])


def test_constant_statistic_gives_zero_estimate():
    net = nn.DenseNet([3, 1], [np.zeros((1, 3))], [np.array([2.5])])
    rng = np.random.default_rng(0)
    batch = mine.shuffle_marginal(rng.normal(size=10), rng.normal(size=(10, 2)), rng)
    assert mine.dv_estimate(net, batch) == pytest.approx(0.0, abs=1e-12)


def test_shuffle_is_a_permutation_of_codes():
    rng = np.random.default_rng(1)
    codes = rng.normal(size=(20, 2))
    batch = mine.shuffle_marginal(codes, rng.normal(size=(20, 3)), rng)
    assert sorted(map(tuple, batch.shuffled_codes)) == sorted(map(tuple, codes))
    assert batch.joint.shape == (20, 5) and batch.marginal.shape == (20, 5)


def test_batch_validation():
    with pytest.raises(ValueError):
        mine.MineBatch(np.zeros(1), np.zeros(1), np.zeros(1))
    with pytest.raises(ValueError):
        mine.MineBatch(np.zeros(3), np.zeros(4), np.zeros(3))


def test_ema_update():
    ema = mine.EmaState(decay=0.9)
    assert ema.update(2.0) == 2.0
    assert ema.update(1.0) == pytest.approx(1.9)
    with pytest.raises(ValueError):
        mine.EmaState(decay=1.0)


def test_output_gradients_match_finite_differences():
    rng = np.random.default_rng(2)
    net = nn.statistic_net(1, 2, rng)
    codes, outputs = rng.normal(size=8), rng.normal(size=(8, 2))
    perm = rng.permutation(8)
    batch = mine.MineBatch(codes, outputs, codes[perm])
    _, out_grad, estimate = mine.mine_step(net, batch, mine.EmaState())
    assert estimate == pytest.approx(mine.dv_estimate(net, batch))
    h = 1e-6
    for idx in np.ndindex(outputs.shape):
        e = np.zeros_like(outputs)
        e[idx] = h
        hi = mine.dv_estimate(net, mine.MineBatch(codes, outputs + e, codes[perm]))
        lo = mine.dv_estimate(net, mine.MineBatch(codes, outputs - e, codes[perm]))
        assert out_grad[idx] == pytest.approx((hi - lo) / (2 * h), rel=1e-4, abs=1e-8)


def test_first_step_parameter_gradients_equal_plain_dv():
    # on the first call the EMA equals the batch mean, so the gradient is the plain one
    rng = np.random.default_rng(3)
    net = nn.statistic_net(1, 1, rng)
    codes, outputs = rng.normal(size=6), rng.normal(size=6)
    perm = rng.permutation(6)
    batch = mine.MineBatch(codes, outputs, codes[perm])
    grads, _, _ = mine.mine_step(net, batch, mine.EmaState())
    params = [p.copy() for p in net.parameters()]
    h = 1e-6
    for k, p in enumerate(params):
        for idx in list(np.ndindex(p.shape))[:5]:
            trial = [q.copy() for q in params]
            trial[k][idx] += h
            net.set_parameters(trial)
            hi = mine.dv_estimate(net, batch)
            trial[k][idx] -= 2 * h
            net.set_parameters(trial)
            lo = mine.dv_estimate(net, batch)
            assert grads[k][idx] == pytest.approx((hi - lo) / (2 * h), rel=1e-4, abs=1e-8)
    net.set_parameters(params)


def test_fit_mine_detects_dependence_quickly():
    rng = np.random.default_rng(4)
    x = rng.normal(size=4000)
    y = x + 0.1 * rng.normal(size=4000)
    indep = rng.normal(size=4000)
    _, dep_hist = mine.fit_mine(x, y, rng, steps=300, batch_size=256)
    _, ind_hist = mine.fit_mine(x, indep, rng, steps=300, batch_size=256)
    assert np.mean(dep_hist[-50:]) > 1.0
    assert abs(np.mean(ind_hist[-50:])) < 0.1
