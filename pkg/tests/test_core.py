import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from centroid_bootstrap.core import (CapabilityError, CentroidEnsemble, ContractError, LossModel,
                                     RngStream, as_generator, as_parameter, bootstrap_loss,
                                     substreams)
from centroid_bootstrap.linear_model import LinearGenConfig, generate_dataset
from centroid_bootstrap.mlp import MlpRegression, MlpSpec, init_params


class FixedLosses(LossModel):
    """Per-point losses fixed in advance; gradients are zero."""

    def __init__(self, losses):
        self.losses = np.asarray(losses, dtype=float)
        self.n, self.dim = len(self.losses), 1

    def per_point_losses(self, theta):
        return self.losses

    def per_point_gradients(self, theta):
        return np.zeros((self.n, 1))


def test_bootstrap_loss_hand_example():
    assert bootstrap_loss(FixedLosses([2.0, 4.0]), np.zeros(1), [2.0, 0.0]) == 2.0


def test_bootstrap_loss_all_ones_is_mean_loss():
    model = generate_dataset(LinearGenConfig(n=20), RngStream(1))
    theta = np.array([0.3, 0.1, -0.2, 0.5])
    assert bootstrap_loss(model, theta, np.ones(20)) == pytest.approx(model.loss(theta), rel=1e-12)


def test_bootstrap_loss_matches_explicit_sum():
    model = generate_dataset(LinearGenConfig(n=30), RngStream(2))
    gen = np.random.default_rng(0)
    theta, w = gen.standard_normal(4), gen.exponential(size=30)
    r = model.y - model.X @ theta
    expected = sum(w[i] * r[i] ** 2 / 2 for i in range(30)) / 30
    assert bootstrap_loss(model, theta, w) == pytest.approx(expected, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(a=st.floats(0, 1), seed=st.integers(0, 10_000))
def test_bootstrap_loss_is_linear_in_weights(a, seed):
    gen = np.random.default_rng(seed)
    model = generate_dataset(LinearGenConfig(n=15), gen)
    theta = gen.standard_normal(4)
    w1, w2 = gen.exponential(size=15), gen.exponential(size=15)
    lhs = bootstrap_loss(model, theta, a * w1 + (1 - a) * w2)
    rhs = a * bootstrap_loss(model, theta, w1) + (1 - a) * bootstrap_loss(model, theta, w2)
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-14)


def _fd(f, x, h=1e-5):
    out = np.empty_like(x)
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = h
        out[k] = (f(x + e) - f(x - e)) / (2 * h)
    return out


@pytest.mark.parametrize("kind", ["linear", "mlp"])
def test_gradient_matches_finite_differences(kind):
    gen = np.random.default_rng(3)
    if kind == "linear":
        model = generate_dataset(LinearGenConfig(n=25), gen)
        theta = gen.standard_normal(model.dim)
    else:
        spec = MlpSpec(3, (6,), 2)
        model = MlpRegression(spec, gen.standard_normal((25, 3)), gen.integers(0, 2, 25),
                              gen.standard_normal(25))
        theta = init_params(spec, gen)
    w = gen.exponential(size=25)
    g = model.gradient(theta, w)
    fd = _fd(lambda t: bootstrap_loss(model, t, w), theta)
    assert np.max(np.abs(g - fd)) / np.max(np.abs(g)) <= 1e-5


def test_all_ones_gradient_is_full_gradient():
    model = generate_dataset(LinearGenConfig(n=40), RngStream(4))
    theta = np.array([1.0, 2.0, 3.0, 4.0])
    np.testing.assert_allclose(model.gradient(theta, np.ones(40)), model.full_gradient(theta),
                               rtol=1e-10)


def test_default_gradients_match_loop():
    gen = np.random.default_rng(5)
    model = FixedLosses([1.0, 2.0, 3.0])
    assert model.gradients(np.zeros((2, 1)), np.ones((3, 2))).shape == (2, 1)
    lin = generate_dataset(LinearGenConfig(n=12), gen)
    thetas, W = gen.standard_normal((3, 4)), gen.exponential(size=(12, 3))
    expected = np.stack([lin.gradient(thetas[j], W[:, j]) for j in range(3)])
    np.testing.assert_allclose(lin.gradients(thetas, W), expected, rtol=1e-12)
    np.testing.assert_allclose(LossModel.gradients(lin, thetas, W), expected, rtol=1e-12)
    np.testing.assert_allclose(LossModel.loss_matrix(lin, thetas), lin.loss_matrix(thetas),
                               rtol=1e-12)


def test_optional_capabilities_raise():
    model = FixedLosses([1.0])
    assert not model.supports_hessian
    with pytest.raises(CapabilityError):
        model.hessian_at(np.zeros(1))
    with pytest.raises(CapabilityError):
        model.analytic_weighted_solve(np.ones(1))


def test_rng_stream_is_reproducible_and_keyed():
    a = RngStream(7, (1, 2)).generator().random(5)
    b = RngStream(7, (1, 2)).generator().random(5)
    c = RngStream(7, (1, 3)).generator().random(5)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)
    assert RngStream(7, 3).stream_id == (3,)
    assert RngStream(7, (1,)).child(2) == RngStream(7, (1, 2))
    with pytest.raises(ContractError):
        RngStream(-1)


def test_substreams_independent_of_draw_order():
    first = [g.random() for g in substreams(RngStream(0, (9,)), 3)]
    again = substreams(RngStream(0, (9,)), 3)
    assert again[2].random() == first[2]
    assert len(set(first)) == 3
    assert len(substreams(np.random.default_rng(0), 2)) == 2


def test_as_generator_accepts_seeds_and_rejects_junk():
    assert as_generator(3).random() == np.random.default_rng(3).random()
    with pytest.raises(ContractError):
        as_generator("seed")


def test_parameter_validation():
    with pytest.raises(ContractError):
        as_parameter([np.nan, 1.0])
    with pytest.raises(ContractError):
        as_parameter([1.0, 2.0], dim=3)


def test_centroid_ensemble_contract():
    ens = CentroidEnsemble(np.zeros((2, 3)), np.array([0.25, 0.75]))
    assert ens.m == 2
    with pytest.raises(ContractError):
        CentroidEnsemble(np.zeros((2, 3)), np.array([0.5, 0.6]))
    with pytest.raises(ContractError):
        CentroidEnsemble(np.zeros((2, 3)), np.array([-0.5, 1.5]))
