import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from centroid_bootstrap.core import ContractError
from centroid_bootstrap.mlp import (MlpRegression, MlpSpec, RmsPropState, batch_loss_grad,
                                    forward, init_params, per_example_grad, per_example_grads,
                                    rmsprop_step)


def test_zero_network_outputs_final_bias():
    spec = MlpSpec(3, (4,), 2)
    params = np.zeros(spec.n_params)
    ws, bs, _ = spec.layout()[-1]
    params[bs] = [0.5, -1.5]
    np.testing.assert_array_equal(forward(spec, params, np.ones(3)), [0.5, -1.5])


def test_single_identity_layer():
    spec = MlpSpec(3, (), 3)
    params = np.zeros(spec.n_params)
    ws, _, _ = spec.layout()[0]
    params[ws] = np.eye(3).ravel()
    x = np.array([1.0, -2.0, 0.5])
    np.testing.assert_array_equal(forward(spec, params, x), x)


def test_forward_matches_straight_line_recompute():
    spec = MlpSpec(4, (5, 3), 2)
    gen = np.random.default_rng(0)
    params = init_params(spec, gen)
    x = gen.standard_normal(4)
    (w1, b1, _), (w2, b2, _), (w3, b3, _) = spec.layout()
    W1, W2, W3 = params[w1].reshape(4, 5), params[w2].reshape(5, 3), params[w3].reshape(3, 2)
    h1 = np.maximum(x @ W1 + params[b1], 0)
    h2 = np.maximum(h1 @ W2 + params[b2], 0)
    np.testing.assert_allclose(forward(spec, params, x), h2 @ W3 + params[b3], atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(sizes=st.lists(st.integers(1, 6), min_size=2, max_size=4))
def test_parameter_count_matches_layout(sizes):
    spec = MlpSpec(sizes[0], tuple(sizes[1:-1]), sizes[-1])
    lay = spec.layout()
    assert lay[-1][1].stop == spec.n_params
    assert sum((w.stop - w.start) + (b.stop - b.start) for w, b, _ in lay) == spec.n_params


def test_init_bounds():
    spec = MlpSpec(5, (50, 50), 4)
    params = init_params(spec, 1)
    for ws, bs, (fan_in, _) in spec.layout():
        assert np.all(np.abs(params[ws]) <= 1 / np.sqrt(fan_in))
        assert np.all(np.abs(params[bs]) <= 1 / np.sqrt(fan_in))


def test_zero_residual_gives_zero_gradient():
    spec = MlpSpec(3, (4,), 2)
    params = init_params(spec, 2)
    x = np.array([0.1, 0.2, 0.3])
    g = per_example_grad(spec, params, x, forward(spec, params, x)[1], action=1)
    np.testing.assert_array_equal(g, 0.0)


def test_gradient_matches_finite_differences_per_layer():
    spec = MlpSpec(4, (8,), 2)
    gen = np.random.default_rng(3)
    params = init_params(spec, gen)
    x, target = gen.standard_normal(4), 0.3
    g = per_example_grad(spec, params, x, target, action=0)
    fd = np.empty_like(params)
    for k in range(len(params)):
        e = np.zeros_like(params)
        e[k] = 1e-4
        up = 0.5 * (forward(spec, params + e, x)[0] - target) ** 2
        down = 0.5 * (forward(spec, params - e, x)[0] - target) ** 2
        fd[k] = (up - down) / 2e-4
    for ws, bs, _ in spec.layout():
        for sl in (ws, bs):
            scale = max(np.max(np.abs(g[sl])), 1e-12)
            assert np.max(np.abs(g[sl] - fd[sl])) / scale <= 1e-5


def test_batch_gradient_is_mean_of_per_example():
    spec = MlpSpec(3, (5,), 3)
    gen = np.random.default_rng(4)
    params = init_params(spec, gen)
    X, A, R = gen.standard_normal((7, 3)), gen.integers(0, 3, 7), gen.standard_normal(7)
    loss, g = batch_loss_grad(spec, params, X, A, R)
    np.testing.assert_allclose(g, per_example_grads(spec, params, X, A, R).mean(axis=0),
                               atol=1e-14)
    model = MlpRegression(spec, X, A, R)
    assert loss == pytest.approx(model.loss(params), rel=1e-12)


def test_wrong_shapes_rejected():
    spec = MlpSpec(3, (4,), 1)
    with pytest.raises(ContractError):
        forward(spec, np.zeros(5), np.zeros(3))
    with pytest.raises(ContractError):
        forward(spec, np.zeros(spec.n_params), np.zeros(2))
    with pytest.raises(ContractError):
        MlpSpec(0, (4,), 1)


def test_rmsprop_zero_gradient_is_fixed_point():
    state = RmsPropState(3)
    p = np.array([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(rmsprop_step(state, p, np.zeros(3)), p)


def test_rmsprop_constant_gradient_without_decay_steps_by_lr_sign():
    state = RmsPropState(3, lr=0.1, decay=0.0, eps=1e-8)
    g = np.array([2.0, -0.5, 1e3])
    step = rmsprop_step(state, np.zeros(3), g)
    np.testing.assert_allclose(step, -0.1 * np.sign(g), rtol=1e-7)


def test_rmsprop_decreases_convex_quadratic():
    A = np.diag([1.0, 3.0, 10.0])
    p = np.array([1.0, -2.0, 0.5])
    state = RmsPropState(3, lr=0.01)
    losses = []
    for _ in range(100):
        losses.append(0.5 * p @ A @ p)
        p = rmsprop_step(state, p, A @ p)
    assert np.all(np.diff(losses[5:]) < 0)
