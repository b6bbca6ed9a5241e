"""Normal, percentile and pivotal bootstrap confidence intervals."""
from __future__ import annotations

import enum
import warnings
from typing import NamedTuple

import numpy as np
from scipy.special import ndtri

from .core import ContractError
from .metrics import ParticleCloud, weighted_quantile


class CiMethod(enum.Enum):
    NORMAL = "normal"
    PERCENTILE = "percentile"
    PIVOTAL = "pivotal"


class ConfidenceInterval(NamedTuple):
    lo: float
    hi: float

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise ContractError(f"confidence level must lie in (0, 1), got {alpha}")


def weighted_sd(cloud: ParticleCloud, coordinate: int) -> float:
    """Mass-weighted population standard deviation of one coordinate."""
    x = cloud.points[:, coordinate]
    mu = cloud.masses @ x
    return float(np.sqrt(max(cloud.masses @ (x - mu) ** 2, 0.0)))


def normal_interval(theta_hat: float, cloud: ParticleCloud, coordinate: int,
                    alpha: float) -> ConfidenceInterval:
    _check_alpha(alpha)
    if len(cloud) == 0:
        raise ContractError("empty cloud")
    se = weighted_sd(cloud, coordinate)
    if se == 0.0:
        warnings.warn("zero-variance cloud gives a degenerate normal interval", RuntimeWarning)
    half = ndtri((1.0 + alpha) / 2.0) * se
    return ConfidenceInterval(theta_hat - half, theta_hat + half)


def percentile_interval(cloud: ParticleCloud, coordinate: int,
                        alpha: float) -> ConfidenceInterval:
    _check_alpha(alpha)
    return ConfidenceInterval(weighted_quantile(cloud, coordinate, (1.0 - alpha) / 2.0),
                              weighted_quantile(cloud, coordinate, (1.0 + alpha) / 2.0))


def pivotal_interval(theta_hat: float, cloud: ParticleCloud, coordinate: int,
                     alpha: float) -> ConfidenceInterval:
    lo, hi = percentile_interval(cloud, coordinate, alpha)
    return ConfidenceInterval(2.0 * theta_hat - hi, 2.0 * theta_hat - lo)


def interval(method, theta_hat: float, cloud: ParticleCloud, coordinate: int,
             alpha: float) -> ConfidenceInterval:
    method = CiMethod(method)
    if method is CiMethod.NORMAL:
        return normal_interval(theta_hat, cloud, coordinate, alpha)
    if method is CiMethod.PERCENTILE:
        return percentile_interval(cloud, coordinate, alpha)
    return pivotal_interval(theta_hat, cloud, coordinate, alpha)
