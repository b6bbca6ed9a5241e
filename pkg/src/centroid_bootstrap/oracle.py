"""Independent validators built on an explicit i.i.d. bootstrap cloud.

Nothing here touches the centroid engine: the ideal objective and K-means
work directly on bootstrap particles in the D-metric, and the surrogate
check compares the engine's objective against that ideal one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ContractError, as_generator, substreams
from .metrics import DMetric, ParticleCloud
from .resampling import WeightScheme, sample_weights


def _nearest(centroids, cloud: ParticleCloud, metric: DMetric):
    d2 = metric.sq_dists(cloud.points, np.atleast_2d(centroids))
    return d2, d2.min(axis=1)


def ideal_objective(centroids, cloud: ParticleCloud, metric: DMetric) -> float:
    """Mass-weighted mean squared D-distance from each point to its nearest centroid."""
    _, best = _nearest(centroids, cloud, metric)
    return float(cloud.masses @ best)


def ideal_weights(centroids, cloud: ParticleCloud, metric: DMetric) -> np.ndarray:
    """Cloud mass captured by each centroid, ties split evenly."""
    d2, best = _nearest(centroids, cloud, metric)
    mask = (d2 == best[:, None]).astype(float)
    mask /= mask.sum(axis=1, keepdims=True)
    v = cloud.masses @ mask
    return v / v.sum()


def _lloyd(X, mass, C, max_iter):
    labels = None
    for _ in range(max_iter):
        d2 = ((X[:, None, :] - C[None, :, :]) ** 2).sum(-1)
        new = d2.argmin(axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(len(C)):
            sel = labels == j
            if mass[sel].sum() > 0:
                C[j] = mass[sel] @ X[sel] / mass[sel].sum()
            else:
                # reseed at the point worst served by its current centroid
                far = int(d2[np.arange(len(X)), labels].argmax())
                C[j] = X[far]
                labels[far] = j
    return C


def kmeans_dmetric(cloud: ParticleCloud, m: int, metric: DMetric, restarts: int = 10,
                   rng=None, max_iter: int = 500) -> np.ndarray:
    """Weighted Lloyd iterations in the D-metric, best of ``restarts`` random starts."""
    if m > len(cloud):
        raise ContractError(f"m={m} exceeds cloud size {len(cloud)}")
    gen = as_generator(rng)
    X = metric.embed(cloud.points)
    best, best_obj = None, np.inf
    for _ in range(max(1, restarts)):
        start = gen.choice(len(cloud), size=m, replace=False)
        C = _lloyd(X, cloud.masses, X[start].copy(), max_iter)
        obj = float(cloud.masses @ ((X[:, None, :] - C[None]) ** 2).sum(-1).min(1))
        if obj < best_obj:
            best, best_obj = C, obj
    return np.linalg.solve(metric.factor, best.T).T


def exhaustive_two_means(cloud: ParticleCloud, metric: DMetric):
    """Best 2-partition by enumeration; returns ``(centroids, objective)``."""
    X = metric.embed(cloud.points)
    k = len(X)
    best, best_obj = None, np.inf
    for code in range(1, 2 ** (k - 1)):
        side = np.array([(code >> i) & 1 for i in range(k)], dtype=bool)
        C = []
        obj = 0.0
        for part in (side, ~side):
            w = cloud.masses[part]
            if w.sum() == 0:
                c = X[part][0]
            else:
                c = w @ X[part] / w.sum()
            obj += float(w @ ((X[part] - c) ** 2).sum(1))
            C.append(c)
        if obj < best_obj:
            best, best_obj = np.array(C), obj
    return np.linalg.solve(metric.factor, best.T).T, best_obj


@dataclass
class SurrogateFit:
    pearson_r: float
    slope: float
    intercept: float
    B: float
    B_se: float
    surrogate: np.ndarray
    ideal_half: np.ndarray


def surrogate_correlation(model, num_configs: int = 20, pool_size: int = 2000, m: int = 5,
                          rng=None, scheme=WeightScheme.MULTINOMIAL, pool=None) -> SurrogateFit:
    """Compare ``E_w min_j L_w(theta_j)`` with ``E_w min_j ||theta_j - theta_w||_D^2 / 2``.

    Centroid sets are drawn around the MLE at radii spread over a few
    bootstrap standard deviations. Both expectations are estimated on one
    shared pool of weight draws. ``B`` is the pool mean of ``L_w(theta_w)``.
    """
    if num_configs < 3:
        raise ContractError("at least 3 configurations are needed for a correlation")
    cfg_rng, pool_rng = substreams(rng, 2)
    if pool is None:
        pool = sample_weights(scheme, model.n, pool_rng, size=pool_size)
    particles = model.analytic_weighted_solve_batch(pool)
    H = model.hessian_at(None)
    metric = DMetric(H)
    theta_hat = model.mle()
    boot_scale = np.linalg.cholesky(np.linalg.inv(H) / model.n)

    min_loss_at_particle = np.einsum("hi,ih->h", pool, model.loss_matrix(particles)) / model.n
    B = float(min_loss_at_particle.mean())
    B_se = float(min_loss_at_particle.std(ddof=1) / np.sqrt(len(pool)))

    radii = np.linspace(0.3, 3.0, num_configs)
    sur, ideal = [], []
    for r in radii:
        C = theta_hat + r * cfg_rng.standard_normal((m, model.dim)) @ boot_scale.T
        sur.append(float((pool @ model.loss_matrix(C) / model.n).min(axis=1).mean()))
        ideal.append(0.5 * float(metric.sq_dists(particles, C).min(axis=1).mean()))
    sur, ideal = np.array(sur), np.array(ideal)
    r = float(np.corrcoef(ideal, sur)[0, 1])
    slope, intercept = np.polyfit(ideal, sur, 1)
    return SurrogateFit(r, float(slope), float(intercept), B, B_se, sur, ideal)
