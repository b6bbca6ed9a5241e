import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from centroid_bootstrap.core import ContractError
from centroid_bootstrap.intervals import (CiMethod, interval, normal_interval,
                                          percentile_interval, pivotal_interval, weighted_sd)
from centroid_bootstrap.metrics import ParticleCloud


def test_normal_interval_unit_se():
    cloud = ParticleCloud.uniform(np.array([[-1.0], [1.0]]))  # population sd 1
    lo, hi = normal_interval(0.0, cloud, 0, 0.9)
    assert lo == pytest.approx(-1.6449, abs=1e-4)
    assert hi == pytest.approx(1.6449, abs=1e-4)


def test_normal_interval_single_particle_warns():
    cloud = ParticleCloud.uniform(np.array([[2.0]]))
    with pytest.warns(RuntimeWarning):
        assert normal_interval(0.5, cloud, 0, 0.9) == (0.5, 0.5)


def test_normal_interval_widens_with_alpha():
    cloud = ParticleCloud.uniform(np.random.default_rng(0).standard_normal((30, 1)))
    widths = [np.diff(normal_interval(0.0, cloud, 0, a))[0] for a in (0.5, 0.8, 0.9, 0.99)]
    assert np.all(np.diff(widths) > 0)


def test_weighted_sd_is_population_sd():
    x = np.array([[1.0], [2.0], [4.0]])
    assert weighted_sd(ParticleCloud.uniform(x), 0) == pytest.approx(np.std(x))


def test_percentile_interval_examples():
    grid = ParticleCloud.uniform(np.arange(1.0, 101.0)[:, None])
    assert percentile_interval(grid, 0, 0.9) == (5.0, 95.0)
    pair = ParticleCloud.uniform(np.array([[-1.0], [1.0]]))
    assert percentile_interval(pair, 0, 0.5) == (-1.0, 1.0)
    point = ParticleCloud.uniform(np.array([[3.0], [3.0]]))
    assert percentile_interval(point, 0, 0.9) == (3.0, 3.0)


def test_pivotal_direct_formula():
    # Q_lo = 0.5 and Q_hi = 2 at alpha = 0.5 on this four-point cloud
    cloud = ParticleCloud.uniform(np.array([[0.5], [1.0], [2.0], [3.0]]))
    assert percentile_interval(cloud, 0, 0.5) == (0.5, 2.0)
    assert pivotal_interval(1.0, cloud, 0, 0.5) == (0.0, 1.5)


def test_pivotal_equals_percentile_when_symmetric():
    # alpha = 0.4 puts both quantiles on the inner pair, so the cut is symmetric
    cloud = ParticleCloud.uniform(np.array([[-2.0], [-1.0], [1.0], [2.0]]))
    assert percentile_interval(cloud, 0, 0.4) == (-1.0, 1.0)
    assert pivotal_interval(0.0, cloud, 0, 0.4) == percentile_interval(cloud, 0, 0.4)


def test_pivotal_shift_is_twice_the_offset():
    pts = np.random.default_rng(1).standard_normal((41, 1))
    cloud = ParticleCloud.uniform(pts)
    c = 0.7
    theta_hat = float(pts.mean()) + c
    piv = pivotal_interval(theta_hat, cloud, 0, 0.8)
    at_mean = pivotal_interval(float(pts.mean()), cloud, 0, 0.8)
    np.testing.assert_allclose(np.subtract(piv, at_mean), [2 * c, 2 * c], rtol=1e-12)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), alpha=st.floats(0.05, 0.99), shift=st.floats(-10, 10))
def test_reflection_and_translation(seed, alpha, shift):
    gen = np.random.default_rng(seed)
    pts = gen.standard_normal((int(gen.integers(1, 30)), 2))
    cloud = ParticleCloud(pts, gen.dirichlet(np.ones(len(pts))))
    theta_hat = float(gen.standard_normal())
    plo, phi = percentile_interval(cloud, 1, alpha)
    assert pivotal_interval(theta_hat, cloud, 1, alpha) == (2 * theta_hat - phi,
                                                            2 * theta_hat - plo)
    moved = ParticleCloud(pts + shift, cloud.masses)
    for method in CiMethod:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # one-point clouds warn about zero variance
            base = interval(method, theta_hat, cloud, 1, alpha)
            new = interval(method, theta_hat + shift, moved, 1, alpha)
        np.testing.assert_allclose(np.subtract(new, base), [shift, shift], atol=1e-9)


def test_alpha_validated():
    cloud = ParticleCloud.uniform(np.zeros((2, 1)))
    for bad in (0.0, 1.0, 1.2):
        with pytest.raises(ContractError):
            interval("percentile", 0.0, cloud, 0, bad)
    with pytest.raises(ValueError):
        interval("bca", 0.0, cloud, 0, 0.9)
