"""Centroid approximation of bootstrap distributions.

A small set of parameter vectors ("centroids") is trained so that, for a
random bootstrap weight vector, the best-fitting centroid is close to that
draw's bootstrap estimate. The centroids, weighted by how often each one
wins, stand in for a large i.i.d. bootstrap sample.
"""
from .core import (CapabilityError, CentroidEnsemble, ContractError, DegenerateResampleError,
                   LossModel, NumericalAbort, RngStream, bootstrap_loss)
from .engine import EngineConfig, TrainTrace, run
from .intervals import CiMethod, ConfidenceInterval, interval
from .linear_model import LinearGenConfig, LinearModel, generate_dataset
from .metrics import DMetric, ParticleCloud, wasserstein2
from .resampling import WeightScheme, iid_bootstrap_particles, sample_weights

__all__ = [
    "CapabilityError", "CentroidEnsemble", "CiMethod", "ConfidenceInterval", "ContractError",
    "DMetric", "DegenerateResampleError", "EngineConfig", "LinearGenConfig", "LinearModel",
    "LossModel", "NumericalAbort", "ParticleCloud", "RngStream", "TrainTrace", "WeightScheme",
    "bootstrap_loss", "generate_dataset", "iid_bootstrap_particles", "interval", "run",
    "sample_weights", "wasserstein2",
]
__version__ = "0.1.0"
