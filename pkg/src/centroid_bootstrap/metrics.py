"""Quadratic D-metric, exact W2 between weighted clouds, quantiles and coverage."""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .core import ContractError

DEFAULT_OT_CAP = 200 * 10_000  # |a| * |b| limit


@dataclass
class ParticleCloud:
    points: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.masses = np.asarray(self.masses, dtype=float)
        if self.masses.shape != (self.points.shape[0],):
            raise ContractError("one mass per point is required")
        if np.any(self.masses < 0) or abs(self.masses.sum() - 1.0) > 1e-12:
            raise ContractError("masses must lie on the probability simplex")
        if not np.all(np.isfinite(self.points)):
            raise ContractError("cloud points must be finite")

    @classmethod
    def uniform(cls, points) -> "ParticleCloud":
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(points, np.full(len(points), 1.0 / len(points)))

    def __len__(self):
        return self.points.shape[0]


class DMetric:
    """``||v||_D^2 = v^T H v`` for a symmetric positive-definite ``H``."""

    def __init__(self, H):
        H = np.atleast_2d(np.asarray(H, dtype=float))
        if H.shape[0] != H.shape[1] or not np.allclose(H, H.T, rtol=1e-10, atol=1e-12):
            raise ContractError("H must be a symmetric square matrix")
        try:
            L = np.linalg.cholesky(H)
        except np.linalg.LinAlgError:
            raise ContractError("H is not positive definite") from None
        self.H = H
        self.factor = L.T  # H = factor^T factor

    @classmethod
    def identity(cls, d: int) -> "DMetric":
        return cls(np.eye(d))

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    def embed(self, points) -> np.ndarray:
        """Map points so that Euclidean distance equals D-distance."""
        return np.asarray(points, dtype=float) @ self.factor.T

    def sq_dists(self, a, b) -> np.ndarray:
        ea, eb = self.embed(np.atleast_2d(a)), self.embed(np.atleast_2d(b))
        # direct differences: the expanded |a|^2 + |b|^2 - 2ab form leaves
        # ~1e-16 residue that becomes ~1e-8 after the square root
        out = np.empty((len(ea), len(eb)))
        for start in range(0, len(ea), 64):
            diff = ea[start:start + 64, None, :] - eb[None, :, :]
            out[start:start + 64] = np.einsum("ijk,ijk->ij", diff, diff)
        return out


def d_norm_sq(metric: DMetric, v) -> float:
    v = np.asarray(v, dtype=float)
    if v.shape != (metric.dim,):
        raise ContractError(f"vector has shape {v.shape}, metric is {metric.dim}-dimensional")
    return float(v @ metric.H @ v)


def _ot():
    for backend in ("TENSORFLOW", "PYTORCH", "JAX", "CUPY"):
        os.environ.setdefault(f"POT_BACKEND_DISABLE_{backend}", "1")
    import ot
    return ot


def transport_plan(a: ParticleCloud, b: ParticleCloud, metric: DMetric | None = None,
                   cap: int = DEFAULT_OT_CAP):
    """Optimal plan and cost matrix for the squared D-distance ground cost."""
    if len(a) * len(b) > cap:
        raise ContractError(
            f"transport problem {len(a)} x {len(b)} exceeds cap {cap}; subsample the larger cloud")
    metric = metric or DMetric.identity(a.points.shape[1])
    cost = metric.sq_dists(a.points, b.points)
    ot = _ot()
    plan, log = ot.emd(a.masses, b.masses, cost, numItermax=10_000_000, log=True)
    if log.get("warning"):
        raise ContractError(f"transport solver did not converge: {log['warning']}")
    return plan, cost


def wasserstein2(a: ParticleCloud, b: ParticleCloud, metric: DMetric | None = None,
                 cap: int = DEFAULT_OT_CAP) -> float:
    """Exact 2-Wasserstein distance between two weighted clouds."""
    plan, cost = transport_plan(a, b, metric, cap)
    return float(np.sqrt(max((plan * cost).sum(), 0.0)))


def weighted_quantile(cloud: ParticleCloud, coordinate: int, alpha: float) -> float:
    """Smallest coordinate value whose cumulative mass reaches ``alpha``."""
    if len(cloud) == 0:
        raise ContractError("empty cloud")
    if not 0.0 <= alpha <= 1.0:
        raise ContractError("alpha must lie in [0, 1]")
    x = cloud.points[:, coordinate]
    order = np.argsort(x, kind="stable")
    cum = np.cumsum(cloud.masses[order])
    # absorb summation round-off so e.g. 1/20 + ... hits 0.95 exactly
    k = int(np.searchsorted(cum, alpha - 1e-12, side="left"))
    return float(x[order][min(k, len(x) - 1)])


def coverage(intervals, truth: float) -> float:
    """Fraction of closed intervals ``[lo, hi]`` containing ``truth``."""
    iv = np.asarray(intervals, dtype=float).reshape(-1, 2)
    if len(iv) == 0:
        raise ContractError("need at least one interval")
    return float(np.mean((iv[:, 0] <= truth) & (truth <= iv[:, 1])))
