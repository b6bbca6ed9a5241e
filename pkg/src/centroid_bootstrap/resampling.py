"""Bootstrap weight samplers and i.i.d. bootstrap particle generators."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import (
    CapabilityError,
    ContractError,
    DegenerateResampleError,
    LossModel,
    as_generator,
)


class WeightScheme(enum.Enum):
    MULTINOMIAL = "multinomial"
    BAYESIAN = "bayesian"

    @classmethod
    def parse(cls, value) -> "WeightScheme":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ContractError(f"unknown weight scheme {value!r}") from None


@dataclass(frozen=True)
class SolveConfig:
    """How to obtain a bootstrap particle when no closed form is available.

    ``analytic`` is used whenever the model supports it; otherwise plain
    gradient descent runs until the gradient norm drops below ``tol``.
    """

    analytic: bool = True
    lr: float = 0.1
    max_iter: int = 10_000
    tol: float = 1e-8


def sample_weights(scheme, n: int, rng, size: int | None = None) -> np.ndarray:
    """Draw one (``size=None``) or ``size`` bootstrap weight vectors.

    Multinomial counts come from ``n`` uniform index draws, so each row sums
    to exactly ``n``. Bayesian weights are ``n * Dirichlet(1, ..., 1)``.
    """
    scheme = WeightScheme.parse(scheme)
    if n < 1:
        raise ContractError("n must be at least 1")
    gen = as_generator(rng)
    rows = 1 if size is None else int(size)
    if scheme is WeightScheme.MULTINOMIAL:
        idx = gen.integers(0, n, size=(rows, n))
        offsets = (np.arange(rows) * n)[:, None]
        w = np.bincount((idx + offsets).ravel(), minlength=rows * n)
        w = w.reshape(rows, n).astype(float)
    else:
        g = gen.standard_exponential(size=(rows, n))
        w = n * g / g.sum(axis=1, keepdims=True)
    return w[0] if size is None else w


def _solve_particle(model: LossModel, w, solver: SolveConfig, start=None):
    if solver.analytic and model.supports_analytic_solve:
        return model.analytic_weighted_solve(w)
    if solver.analytic and start is None:
        raise CapabilityError(
            f"{type(model).__name__} has no closed-form solve; pass SolveConfig(analytic=False)")
    theta = np.zeros(model.dim) if start is None else np.array(start, dtype=float)
    for _ in range(solver.max_iter):
        g = model.gradient(theta, w)
        if np.linalg.norm(g) < solver.tol:
            break
        theta = theta - solver.lr * g
    return theta


def iid_bootstrap_particles(model: LossModel, m: int, scheme=WeightScheme.MULTINOMIAL,
                            solver: SolveConfig | None = None, rng=None, start=None):
    """Return ``m`` i.i.d. bootstrap particles as an ``(m, dim)`` array.

    Each particle minimises the bootstrap loss of an independent weight draw.
    ``start`` seeds the iterative solver when no closed form is available.
    """
    solver = solver or SolveConfig()
    if m == 0:
        return np.empty((0, model.dim))
    if solver.analytic and not model.supports_analytic_solve and start is None:
        start = np.zeros(model.dim)
    gen = as_generator(rng)
    weights = sample_weights(scheme, model.n, gen, size=m)
    if solver.analytic and hasattr(model, "analytic_weighted_solve_batch"):
        return model.analytic_weighted_solve_batch(weights)
    return np.stack([_solve_particle(model, w, solver, start) for w in weights])


def residual_bootstrap_particles(linear, m: int, rng=None, indices=None) -> np.ndarray:
    """Residual bootstrap: refit OLS on ``X theta_hat + resampled residuals``.

    Residuals are resampled raw (uncentred) with replacement. ``indices``
    optionally fixes the ``(m, n)`` residual draw instead of sampling it.
    """
    if not getattr(linear, "supports_residual_bootstrap", False):
        raise CapabilityError("residual bootstrap is only defined for the linear model")
    if m == 0:
        return np.empty((0, linear.dim))
    gen = as_generator(rng)
    theta_hat = linear.mle()
    fitted = linear.X @ theta_hat
    resid = linear.y - fitted
    n = linear.n
    idx = gen.integers(0, n, size=(m, n)) if indices is None else np.asarray(indices, dtype=int)
    if idx.shape != (m, n):
        raise ContractError(f"indices must have shape {(m, n)}")
    ystar = fitted[None, :] + resid[idx]
    try:
        return np.linalg.solve(linear.gram, (ystar @ linear.X).T).T
    except np.linalg.LinAlgError as exc:
        raise DegenerateResampleError("design matrix is singular") from exc
