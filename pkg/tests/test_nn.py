import numpy as np
import pytest

from infoqgan import nn


def random_net(rng, out_act="identity", hidden_act="leaky_relu"):
    depth = int(rng.integers(1, 4))
    dims = [int(rng.integers(1, 6))] + [int(rng.integers(2, 9)) for _ in range(depth - 1)] + [1]
    return nn.DenseNet.init(dims, rng, hidden_act, out_act)


def numeric_param_grads(net, x, upstream, h=1e-6):
    params = [p.copy() for p in net.parameters()]
    out = []
    for k, p in enumerate(params):
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            for sign in (1, -1):
                trial = [q.copy() for q in params]
                trial[k][idx] += sign * h
                net.set_parameters(trial)
                g[idx] += sign * np.sum(nn.forward(net, x) * upstream) / (2 * h)
        out.append(g)
    net.set_parameters(params)
    return out


def test_leaky_relu_and_sigmoid_values():
    np.testing.assert_allclose(nn.leaky_relu(np.array([-2.0, 0.0, 3.0])), [-0.02, 0.0, 3.0])
    s = nn.sigmoid(np.array([-800.0, 0.0, 800.0]))
    np.testing.assert_allclose(s, [0.0, 0.5, 1.0])
    assert np.all(np.isfinite(s))


def test_discriminator_shape_and_range():
    rng = np.random.default_rng(0)
    d = nn.discriminator_net(2, rng)
    assert d.layer_dims == [2, 64, 64, 1]
    y = nn.forward(d, rng.normal(size=(10, 2)))
    assert y.shape == (10, 1)
    assert np.all((y > 0) & (y < 1))


def test_single_vector_forward():
    rng = np.random.default_rng(1)
    t = nn.statistic_net(1, 16, rng)
    x = rng.normal(size=17)
    np.testing.assert_allclose(nn.forward(t, x), nn.forward(t, x[None])[0])


def test_forward_rejects_wrong_width():
    net = nn.discriminator_net(2, np.random.default_rng(0))
    with pytest.raises(nn.ShapeError):
        nn.forward(net, np.zeros((3, 5)))


def test_init_bounds():
    rng = np.random.default_rng(2)
    net = nn.DenseNet.init([16, 64, 1], rng)
    assert np.abs(net.weights[0]).max() <= 0.25
    assert np.abs(net.weights[1]).max() <= 1 / 8


def test_gradients_match_finite_differences_on_10_nets():
    rng = np.random.default_rng(42)
    for k in range(10):
        net = random_net(rng, "sigmoid" if k % 2 else "identity",
                         "tanh" if k % 3 == 0 else "leaky_relu")
        x = rng.normal(size=(4, net.layer_dims[0]))
        upstream = rng.normal(size=(4, 1))
        grads, in_grad = nn.backward(net, x, upstream)
        for a, b in zip(grads, numeric_param_grads(net, x, upstream)):
            np.testing.assert_allclose(a, b, rtol=1e-4, atol=1e-7)
        h = 1e-6
        for idx in np.ndindex(x.shape):
            e = np.zeros_like(x)
            e[idx] = h
            fd = np.sum((nn.forward(net, x + e) - nn.forward(net, x - e)) * upstream) / (2 * h)
            assert in_grad[idx] == pytest.approx(fd, rel=1e-4, abs=1e-7)


def test_backward_rejects_bad_upstream_shape():
    net = nn.discriminator_net(2, np.random.default_rng(0))
    with pytest.raises(nn.ShapeError):
        nn.backward(net, np.zeros((3, 2)), np.zeros((2, 1)))


def test_adam_first_step_moves_by_learning_rate():
    p, g = [np.array([1.0, -2.0])], [np.array([0.3, -5.0])]
    new, state = nn.adam_step(p, g, nn.AdamState.zeros_like(p), 0.01)
    np.testing.assert_allclose(new[0], [0.99, -1.99], atol=1e-9)
    assert state.step_count == 1
    np.testing.assert_array_equal(p[0], [1.0, -2.0])  # inputs untouched


def test_adam_minimizes_quadratic():
    p = [np.array([3.0, -4.0])]
    state = nn.AdamState.zeros_like(p)
    for _ in range(2000):
        p, state = nn.adam_step(p, [2 * p[0]], state, 0.05)
    assert np.linalg.norm(p[0]) < 1e-2


def test_adam_rejects_non_finite_gradient():
    p = [np.zeros(2)]
    with pytest.raises(nn.TrainingError) as err:
        nn.adam_step(p, [np.array([np.nan, 0.0])], nn.AdamState.zeros_like(p), 0.1, "mine")
    assert err.value.component == "mine"


def test_adam_rejects_bad_lr_and_shapes():
    p = [np.zeros(2)]
    with pytest.raises(ValueError):
        nn.adam_step(p, [np.zeros(2)], nn.AdamState.zeros_like(p), 0.0)
    with pytest.raises(nn.ShapeError):
        nn.adam_step(p, [np.zeros(3)], nn.AdamState.zeros_like(p), 0.1)


@pytest.mark.parametrize("epoch, expected", [(0, 1e-3), (29, 1e-3), (30, 7e-4), (60, 4.9e-4),
                                             (299, 1e-3 * 0.7 ** 9)])
def test_step_schedule(epoch, expected):
    assert nn.lr_at(nn.StepSchedule(1e-3, 30, 0.7), epoch) == pytest.approx(expected, rel=1e-12)


def test_step_schedule_validation():
    with pytest.raises(ValueError):
        nn.StepSchedule(0.0)
    with pytest.raises(ValueError):
        nn.StepSchedule(1e-3, 0)
    with pytest.raises(ValueError):
        nn.StepSchedule(1e-3, 30, 1.5)
    with pytest.raises(ValueError):
        nn.lr_at(nn.StepSchedule(1e-3), -1)


def test_net_round_trip_through_dict():
    net = nn.discriminator_net(2, np.random.default_rng(3))
    back = nn.DenseNet.from_dict(net.to_dict())
    x = np.random.default_rng(4).normal(size=(5, 2))
    np.testing.assert_array_equal(nn.forward(back, x), nn.forward(net, x))


def test_densenet_validates_shapes():
    with pytest.raises(nn.ShapeError):
        nn.DenseNet([2, 3, 1], [np.zeros((3, 2))], [np.zeros(3)])
    with pytest.raises(nn.ShapeError):
        nn.DenseNet([2, 1], [np.zeros((2, 1))], [np.zeros(1)])
    with pytest.raises(ValueError):
        nn.DenseNet([2, 1], [np.zeros((1, 2))], [np.zeros(1)], output_activation="relu")
