"""Linear-Gaussian regression with unit noise, the workhorse of the CI study."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .core import ContractError, DegenerateResampleError, LossModel, as_generator, check_weights

log = logging.getLogger(__name__)

TRUE_THETA = (1.0, -1.0, 1.0, -1.0)


@dataclass(frozen=True)
class LinearGenConfig:
    n: int = 50
    theta_true: tuple = TRUE_THETA
    noise_scale: float = 1.0  # 0 gives the noiseless test hook

    @property
    def d(self) -> int:
        return len(self.theta_true)


class LinearModel(LossModel):
    """Per-point loss ``(y_i - x_i . theta)**2 / 2``."""

    supports_hessian = True
    supports_analytic_solve = True
    supports_residual_bootstrap = True

    def __init__(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ContractError(f"X must be (n, d) and y (n,), got {X.shape} and {y.shape}")
        X.setflags(write=False)
        y.setflags(write=False)
        self.X, self.y = X, y
        self.n, self.dim = X.shape
        self.gram = X.T @ X
        try:
            self._gram_chol = cho_factor(self.gram)
        except LinAlgError as exc:
            raise ContractError("X^T X is singular") from exc
        log.debug("linear model n=%d d=%d cond(X^T X)=%.3g", self.n, self.dim,
                  np.linalg.cond(self.gram))
        self._mle = cho_solve(self._gram_chol, X.T @ y)

    def residuals(self, thetas) -> np.ndarray:
        """``(n,)`` for one parameter vector or ``(n, m)`` for a stack."""
        thetas = np.asarray(thetas, dtype=float)
        return self.y[:, None] - self.X @ thetas.T if thetas.ndim == 2 else self.y - self.X @ thetas

    def per_point_losses(self, theta):
        return 0.5 * self.residuals(theta) ** 2

    def per_point_gradients(self, theta):
        return -self.residuals(theta)[:, None] * self.X

    def gradient(self, theta, w):
        w = check_weights(w, self.n)
        return -(w * self.residuals(theta)) @ self.X / self.n

    def loss_matrix(self, thetas):
        return 0.5 * self.residuals(np.atleast_2d(thetas)) ** 2

    def gradients(self, thetas, weights):
        r = self.residuals(np.atleast_2d(thetas))
        weights = np.asarray(weights, dtype=float).reshape(r.shape)
        return -((weights * r).T @ self.X) / self.n

    def hessian_at(self, theta=None):
        return self.gram / self.n

    def mle(self) -> np.ndarray:
        return self._mle.copy()

    def analytic_weighted_solve(self, w):
        return weighted_ols(self, w)

    def analytic_weighted_solve_batch(self, W):
        return weighted_ols_batch(self, W)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{k + 1}" for k in range(self.dim)] + ["y"])
            for row, target in zip(self.X, self.y):
                writer.writerow([repr(float(v)) for v in row] + [repr(float(target))])

    @classmethod
    def from_csv(cls, path) -> "LinearModel":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            d = len(header) - 1
            expected = [f"x{k + 1}" for k in range(d)] + ["y"]
            if header != expected:
                raise ContractError(f"{path}: header must be {','.join(expected)}")
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if len(row) != d + 1:
                    raise ContractError(f"{path}:{lineno}: expected {d + 1} fields")
                try:
                    rows.append([float(v) for v in row])
                except ValueError as exc:
                    raise ContractError(f"{path}:{lineno}: {exc}") from None
        data = np.array(rows, dtype=float)
        return cls(data[:, :-1], data[:, -1])


def generate_dataset(cfg: LinearGenConfig, rng) -> LinearModel:
    """``x ~ N(0, I_d)``, ``y = theta_true . x + noise_scale * N(0, 1)``."""
    gen = as_generator(rng)
    theta = np.asarray(cfg.theta_true, dtype=float)
    X = gen.standard_normal((cfg.n, cfg.d))
    y = X @ theta + cfg.noise_scale * gen.standard_normal(cfg.n)
    return LinearModel(X, y)


def weighted_ols(model: LinearModel, w) -> np.ndarray:
    """Minimiser of ``sum_i w_i (y_i - x_i . theta)**2 / (2n)``."""
    w = check_weights(w, model.n)
    A = (model.X * w[:, None]).T @ model.X
    b = (w * model.y) @ model.X
    try:
        return cho_solve(cho_factor(A), b)
    except LinAlgError:
        raise DegenerateResampleError(
            "weighted normal equations are singular for this weight draw", weights=w) from None


def weighted_ols_batch(model: LinearModel, W) -> np.ndarray:
    """Row-wise :func:`weighted_ols` for a ``(k, n)`` stack of weight vectors."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    A = np.einsum("ki,ia,ib->kab", W, model.X, model.X)
    b = (W * model.y) @ model.X
    try:
        return np.linalg.solve(A, b[..., None])[..., 0]
    except np.linalg.LinAlgError:
        bad = [k for k in range(len(W)) if np.linalg.matrix_rank(A[k]) < model.dim]
        raise DegenerateResampleError(
            f"weighted normal equations are singular for draw(s) {bad}",
            weights=W[bad[0]] if bad else None) from None


def empirical_hessian(model: LinearModel) -> np.ndarray:
    return model.hessian_at()
