"""Shared types, the RNG contract and the LossModel interface.

Every parameter vector is a 1-D float64 ``numpy`` array of length ``dim``.
Stacks of parameter vectors (centroids, particle clouds) are ``(m, dim)``
arrays. Weight vectors are length-``n`` float arrays.
"""
from __future__ import annotations

import abc
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class ContractError(ValueError):
    """Raised when an input violates a documented precondition."""


class DegenerateResampleError(np.linalg.LinAlgError):
    """A weighted solve hit a singular system for a particular weight draw."""

    def __init__(self, message, weights=None):
        super().__init__(message)
        self.weights = weights


class CapabilityError(TypeError):
    """The model does not provide an optional capability an operation needs."""


class NumericalAbort(FloatingPointError):
    """Non-finite values appeared during an optimization run."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream keyed by ``(seed, stream_id)``.

    ``stream_id`` may be a single integer or a tuple of integers; the tuple
    form is how per-(trial, purpose) streams are derived. Streams are built
    on ``numpy.random.SeedSequence`` + PCG64, which is platform independent.
    """

    seed: int
    stream_id: tuple = ()

    def __post_init__(self):
        sid = self.stream_id
        if isinstance(sid, (int, np.integer)):
            sid = (int(sid),)
        sid = tuple(int(s) for s in sid)
        if self.seed < 0 or any(s < 0 for s in sid):
            raise ContractError("seed and stream ids must be non-negative")
        object.__setattr__(self, "stream_id", sid)

    def child(self, *key: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id + tuple(int(k) for k in key))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=self.stream_id)
        return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng) -> np.random.Generator:
    """Accept an RngStream, a Generator or an int seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if rng is None or isinstance(rng, (int, np.integer)):
        return np.random.default_rng(rng)
    raise ContractError(f"cannot build a random generator from {type(rng).__name__}")


def substreams(rng, k: int) -> list:
    """``k`` independent generators derived from ``rng``."""
    if isinstance(rng, RngStream):
        return [rng.child(i).generator() for i in range(k)]
    return as_generator(rng).spawn(k)


def as_parameter(theta, dim: int | None = None) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1:
        raise ContractError(f"parameter vector must be 1-D, got shape {theta.shape}")
    if dim is not None and theta.shape[0] != dim:
        raise ContractError(f"parameter vector has length {theta.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(theta)):
        raise ContractError("parameter vector has non-finite entries")
    return theta


def check_weights(w, n: int) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (n,):
        raise ContractError(f"weight vector has shape {w.shape}, expected ({n},)")
    return w


@dataclass(frozen=True)
class Dataset:
    """An immutable collection of opaque data records."""

    points: tuple

    def __init__(self, points: Sequence):
        pts = tuple(points)
        if len(pts) < 1:
            raise ContractError("a dataset needs at least one point")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)


@dataclass
class CentroidEnsemble:
    centroids: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        self.centroids = np.atleast_2d(np.asarray(self.centroids, dtype=float))
        self.probs = np.asarray(self.probs, dtype=float)
        m = self.centroids.shape[0]
        if m < 1:
            raise ContractError("an ensemble needs at least one centroid")
        if self.probs.shape != (m,):
            raise ContractError("probs must have one entry per centroid")
        if np.any(self.probs < 0) or abs(self.probs.sum() - 1.0) > 1e-12:
            raise ContractError("probs must lie on the probability simplex")

    @property
    def m(self) -> int:
        return self.centroids.shape[0]


class LossModel(abc.ABC):
    """An M-estimation problem over ``n`` data points.

    Subclasses implement :meth:`per_point_losses` and
    :meth:`per_point_gradients`; the weighted quantities are derived from
    those. Vectorised overrides of :meth:`loss_matrix` and :meth:`gradients`
    are encouraged since the centroid engine calls them every iteration.
    """

    n: int
    dim: int

    supports_hessian = False
    supports_analytic_solve = False

    @abc.abstractmethod
    def per_point_losses(self, theta) -> np.ndarray:
        """Length-``n`` vector of losses of each data point at ``theta``."""

    @abc.abstractmethod
    def per_point_gradients(self, theta) -> np.ndarray:
        """``(n, dim)`` array whose row ``i`` is the gradient of point ``i``'s loss."""

    def gradient(self, theta, w) -> np.ndarray:
        w = check_weights(w, self.n)
        return w @ self.per_point_gradients(theta) / self.n

    def full_gradient(self, theta) -> np.ndarray:
        return self.gradient(theta, np.ones(self.n))

    def loss(self, theta) -> float:
        return float(np.mean(self.per_point_losses(theta)))

    def loss_matrix(self, thetas) -> np.ndarray:
        """``(n, m)`` matrix of per-point losses, one column per parameter row."""
        thetas = np.atleast_2d(thetas)
        return np.column_stack([self.per_point_losses(t) for t in thetas])

    def gradients(self, thetas, weights) -> np.ndarray:
        """Row ``j`` is ``sum_i weights[i, j] * grad l_i(thetas[j]) / n``."""
        thetas = np.atleast_2d(thetas)
        weights = np.asarray(weights, dtype=float).reshape(self.n, -1)
        return np.stack([weights[:, j] @ self.per_point_gradients(t) / self.n
                         for j, t in enumerate(thetas)])

    def hessian_at(self, theta) -> np.ndarray:
        raise CapabilityError(f"{type(self).__name__} does not provide a Hessian")

    def analytic_weighted_solve(self, w) -> np.ndarray:
        raise CapabilityError(f"{type(self).__name__} has no closed-form weighted solve")


def bootstrap_loss(model: LossModel, theta, w) -> float:
    """``sum_i w_i * l(x_i, theta) / n``."""
    w = check_weights(w, model.n)
    return float(w @ model.per_point_losses(theta) / model.n)
