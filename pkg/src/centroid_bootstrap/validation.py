"""Self-checks run by ``centroid-bootstrap validate``.

Each check returns ``(ok, detail)``; :func:`run_checks` never raises, so a
broken component shows up as a failed line rather than a traceback.
"""
from __future__ import annotations

import itertools

import numpy as np

from . import engine
from .core import RngStream
from .linear_model import LinearGenConfig, generate_dataset
from .metrics import DMetric, ParticleCloud, wasserstein2
from .mlp import MlpSpec, init_params, per_example_grad
from .oracle import exhaustive_two_means, ideal_objective, kmeans_dmetric, surrogate_correlation
from .resampling import iid_bootstrap_particles, sample_weights


def _fd_grad(f, x, h=1e-6):
    g = np.empty_like(x)
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def check_surrogate(seed):
    model = generate_dataset(LinearGenConfig(n=2000), RngStream(seed, (0,)))
    fit = surrogate_correlation(model, num_configs=20, pool_size=500, rng=RngStream(seed, (1,)))
    return fit.pearson_r >= 0.99, f"r={fit.pearson_r:.6f} slope={fit.slope:.4f}"


def check_kmeans(seed):
    model = generate_dataset(LinearGenConfig(n=50), RngStream(seed, (2,)))
    metric = DMetric(model.hessian_at())
    pts = iid_bootstrap_particles(model, 10, rng=RngStream(seed, (3,)))
    cloud = ParticleCloud.uniform(pts)
    _, best = exhaustive_two_means(cloud, metric)
    km = ideal_objective(kmeans_dmetric(cloud, 2, metric, restarts=20, rng=RngStream(seed, (4,))),
                         cloud, metric)
    return abs(km - best) <= 1e-9 * max(1.0, best), f"kmeans={km:.6g} exhaustive={best:.6g}"


def check_ot(seed):
    gen = RngStream(seed, (5,)).generator()
    a, b = gen.standard_normal((6, 3)), gen.standard_normal((6, 3))
    metric = DMetric(np.diag([1.0, 2.0, 3.0]))
    d2 = metric.sq_dists(a, b)
    brute = min(d2[np.arange(6), list(p)].mean() for p in itertools.permutations(range(6)))
    w = wasserstein2(ParticleCloud.uniform(a), ParticleCloud.uniform(b), metric)
    return abs(w ** 2 - brute) <= 1e-9, f"emd={w ** 2:.12g} brute={brute:.12g}"


def check_linear_gradient(seed):
    model = generate_dataset(LinearGenConfig(n=30), RngStream(seed, (6,)))
    gen = RngStream(seed, (7,)).generator()
    theta = gen.standard_normal(model.dim)
    w = sample_weights("multinomial", model.n, gen)
    g = model.gradient(theta, w)
    fd = _fd_grad(lambda t: float(w @ model.per_point_losses(t)) / model.n, theta)
    err = float(np.max(np.abs(g - fd)) / max(1.0, np.max(np.abs(g))))
    return err <= 1e-6, f"rel_err={err:.2e}"


def check_mlp_gradient(seed):
    spec = MlpSpec(4, (8,), 2)
    gen = RngStream(seed, (8,)).generator()
    params = init_params(spec, gen)
    x, target = gen.standard_normal(4), 0.7
    g = per_example_grad(spec, params, x, target, action=1)

    def loss(p):
        from .mlp import forward
        return 0.5 * (forward(spec, p, x)[1] - target) ** 2

    fd = _fd_grad(loss, params, h=1e-4)
    err = float(np.max(np.abs(g - fd)) / max(1e-12, np.max(np.abs(g))))
    return err <= 1e-5, f"rel_err={err:.2e}"


def check_gradient_forms(seed):
    model = generate_dataset(LinearGenConfig(n=40), RngStream(seed, (9,)))
    thetas = iid_bootstrap_particles(model, 5, rng=RngStream(seed, (10,)))
    draws = sample_weights("multinomial", model.n, RngStream(seed, (11,)), size=200)
    table = engine.build_assignment(model, thetas, draws)
    q, _ = engine.q_matrix(table)
    worst = 0.0
    for j in range(len(thetas)):
        g = engine.mc_gradient(model, thetas[j], j, table)
        if g is not None:
            worst = max(worst, float(np.max(np.abs(g - model.gradient(thetas[j], q[:, j])))))
    return worst <= 1e-10, f"max_abs_diff={worst:.2e}"


def check_dmetric(seed, corrupt_h=False):
    model = generate_dataset(LinearGenConfig(n=50), RngStream(seed, (12,)))
    H = model.hessian_at()
    if corrupt_h:
        vals, vecs = np.linalg.eigh(H)
        vals[0] = -abs(vals[0]) - 1.0
        H = (vecs * vals) @ vecs.T
    try:
        DMetric(H)
    except ValueError as exc:
        return False, f"DMetric rejected H: {exc}"
    return True, "H positive definite"


CHECKS = [
    ("surrogate_correlation", check_surrogate),
    ("kmeans_vs_exhaustive", check_kmeans),
    ("ot_vs_permutation", check_ot),
    ("linear_gradient_fd", check_linear_gradient),
    ("mlp_gradient_fd", check_mlp_gradient),
    ("winner_vs_q_gradient", check_gradient_forms),
    ("dmetric_from_hessian", check_dmetric),
]


def run_checks(seed: int = 0, corrupt_h: bool = False) -> list:
    """``[(name, ok, detail), ...]`` for every check."""
    results = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn(seed, corrupt_h) if fn is check_dmetric else fn(seed)
        except Exception as exc:  # a crash is a failed check, reported by name
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append((name, bool(ok), detail))
    return results
