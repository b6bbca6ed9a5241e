"""Centroid approximation: jointly fit ``m`` centroids to the bootstrap loss.

The centroids minimise ``E_w[min_j L_w(theta_j)]``. Each iteration a centroid
is moved along the average bootstrap-loss gradient of the weight draws it
wins; a centroid whose win fraction does not exceed ``gamma`` is instead
moved along the full-data gradient (the degeneration guard). Weight draws
and the winner table may be refreshed only every ``refresh_freq`` steps, and
the gradient may be estimated on a mini-batch.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, asdict
from typing import Callable, Union

import numpy as np

from .core import (
    CentroidEnsemble,
    ContractError,
    LossModel,
    NumericalAbort,
    as_generator,
    substreams,
)
from .resampling import SolveConfig, WeightScheme, iid_bootstrap_particles, sample_weights

log = logging.getLogger(__name__)

ZERO_WIN_POLICIES = ("hold", "guard")


@dataclass
class EngineConfig:
    """Settings for :func:`run`.

    ``lr`` may be a float, a callable ``t -> float`` or ``None``; ``None``
    resolves to ``1 / trace(H)`` for models that expose a Hessian.
    ``batch=None`` means full-batch gradients. ``init`` is ``"iid"``
    (i.i.d. bootstrap particles) or ``"gaussian"`` (``init_center`` plus
    ``init_sigma`` times standard normal noise; center defaults to zeros).

    ``zero_win_policy`` decides what happens to a centroid that won no draw
    when ``gamma == 0``: ``"hold"`` leaves it in place for this step,
    ``"guard"`` applies the full-data gradient. With ``gamma > 0`` such a
    centroid is always guarded.
    """

    m: int = 50
    M: int = 1
    gamma: float = 0.0
    lr: Union[float, Callable[[int], float], None] = None
    steps: int = 2000
    refresh_freq: int = 1
    batch: int | None = None
    init: str = "iid"
    init_sigma: float = 1.0
    init_center: object = None
    scheme: WeightScheme = WeightScheme.MULTINOMIAL
    m_eval: int = 1000
    zero_win_policy: str = "hold"
    record_params: bool = False

    def validate(self):
        if self.m < 1 or self.M < 1 or self.refresh_freq < 1 or self.m_eval < 1:
            raise ContractError("m, M, refresh_freq and m_eval must all be >= 1")
        if self.steps < 0:
            raise ContractError("steps must be non-negative")
        if not 0 <= self.gamma <= self.m:
            raise ContractError(f"gamma must lie in [0, m], got {self.gamma}")
        if self.batch is not None and self.batch < 1:
            raise ContractError("batch must be >= 1 or None")
        if self.init not in ("iid", "gaussian"):
            raise ContractError(f"unknown init {self.init!r}")
        if self.zero_win_policy not in ZERO_WIN_POLICIES:
            raise ContractError(f"zero_win_policy must be one of {ZERO_WIN_POLICIES}")
        self.scheme = WeightScheme.parse(self.scheme)


@dataclass
class AssignmentTable:
    """Winners of the current weight draws.

    ``draws`` is ``(M, n)``; ``winners`` holds the lowest-index winner of
    each draw; ``loss_matrix`` is the ``(n, m)`` per-point loss cache the
    assignment was computed from.
    """

    draws: np.ndarray
    loss_matrix: np.ndarray
    winners: np.ndarray

    @property
    def m(self) -> int:
        return self.loss_matrix.shape[1]

    def win_indicator(self) -> np.ndarray:
        ind = np.zeros((len(self.winners), self.m))
        ind[np.arange(len(self.winners)), self.winners] = 1.0
        return ind

    def win_fractions(self) -> np.ndarray:
        return np.bincount(self.winners, minlength=self.m) / len(self.winners)


@dataclass
class TrainTrace:
    win_fraction: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    guard_active: list = field(default_factory=list)
    params: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def as_arrays(self) -> dict:
        return {k: np.asarray(getattr(self, k))
                for k in ("win_fraction", "loss", "grad_norm", "guard_active", "params")}

    def to_csv(self, path):
        arr = self.as_arrays()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "centroid", "win_fraction", "loss", "grad_norm",
                             "guard_active"])
            for t in range(len(self.win_fraction)):
                for j in range(arr["win_fraction"].shape[1]):
                    writer.writerow([t, j, repr(float(arr["win_fraction"][t, j])),
                                     repr(float(arr["loss"][t, j])),
                                     repr(float(arr["grad_norm"][t, j])),
                                     int(arr["guard_active"][t, j])])


def datawise_losses(model: LossModel, theta) -> np.ndarray:
    return np.asarray(model.per_point_losses(theta), dtype=float)


def closest_sets(loss_matrix, W) -> np.ndarray:
    """Boolean ``(M, m)`` mask of every centroid attaining ``min_j w_h . L_j``."""
    scores = np.atleast_2d(W) @ loss_matrix
    return scores == scores.min(axis=1, keepdims=True)


def assign_closest(loss_matrix, w) -> list:
    """Sorted indices of all centroids that minimise ``w . L_j``."""
    mask = closest_sets(loss_matrix, np.asarray(w, dtype=float)[None, :])[0]
    return [int(j) for j in np.flatnonzero(mask)]


def build_assignment(model: LossModel, thetas, draws) -> AssignmentTable:
    L = model.loss_matrix(thetas)
    winners = np.argmin(np.atleast_2d(draws) @ L, axis=1)
    return AssignmentTable(draws=np.atleast_2d(draws), loss_matrix=L, winners=winners)


def q_matrix(table: AssignmentTable):
    """Per-point expected weight given that centroid ``j`` wins.

    Returns ``(q, degenerate)`` where ``q`` is ``(n, m)`` and ``degenerate``
    flags columns with no winning draw (those columns are zero).
    """
    ind = table.win_indicator()
    counts = ind.sum(axis=0)
    degenerate = counts == 0
    q = table.draws.T @ ind
    q[:, ~degenerate] /= counts[~degenerate]
    return q, degenerate


def mc_gradient(model: LossModel, theta, j: int, table: AssignmentTable):
    """Average of ``grad L_{w_h}(theta)`` over the draws that centroid ``j`` wins.

    Returns ``None`` when ``j`` wins no draw so the caller can take the
    guarded path.
    """
    won = table.draws[table.winners == j]
    if len(won) == 0:
        return None
    return np.mean([model.gradient(theta, w) for w in won], axis=0)


def guarded_update(theta, win_fraction, gamma, lr, mc_grad, full_grad,
                   zero_win_policy="hold"):
    """One descent step choosing between the winner gradient and the full gradient."""
    theta = np.asarray(theta, dtype=float)
    if win_fraction > gamma and mc_grad is not None:
        return theta - lr * np.asarray(mc_grad)
    if gamma == 0 and zero_win_policy == "hold":
        return theta.copy()
    return theta - lr * np.asarray(full_grad)


def effective_weights(q, win_fraction, gamma, zero_win_policy="hold"):
    """Weight matrix whose column ``j`` yields centroid ``j``'s update direction.

    Winning centroids use ``q[:, j]``; guarded ones use all-ones (the full
    loss); zero-win centroids under the ``hold`` policy with ``gamma == 0``
    get a zero column.
    """
    q = np.asarray(q, dtype=float)
    win_fraction = np.asarray(win_fraction, dtype=float)
    active = win_fraction > gamma
    guard = ~active
    if gamma == 0 and zero_win_policy == "hold":
        guard = np.zeros_like(active)
    eff = np.where(active[None, :], q, 0.0)
    eff[:, guard] = 1.0
    return eff, guard


def learn_probability_weights(model: LossModel, centroids, m_eval: int = 1000,
                              scheme=WeightScheme.MULTINOMIAL, rng=None) -> np.ndarray:
    """Share of fresh weight draws won by each centroid, ties split evenly."""
    if m_eval < 1:
        raise ContractError("m_eval must be >= 1")
    centroids = np.atleast_2d(centroids)
    if centroids.shape[0] == 1:
        return np.ones(1)
    gen = as_generator(rng)
    W = sample_weights(scheme, model.n, gen, size=m_eval)
    return win_shares(closest_sets(model.loss_matrix(centroids), W))


def win_shares(mask) -> np.ndarray:
    """Normalised win counts from an ``(M, m)`` tie mask, splitting ties evenly."""
    mask = np.asarray(mask, dtype=float)
    shares = (mask / mask.sum(axis=1, keepdims=True)).sum(axis=0)
    return shares / shares.sum()


def resolve_lr(model: LossModel, lr):
    if lr is None:
        if not model.supports_hessian:
            raise ContractError("lr=None needs a model with a Hessian")
        return 1.0 / float(np.trace(model.hessian_at(None)))
    return lr


def initial_centroids(model: LossModel, cfg: EngineConfig, rng) -> np.ndarray:
    gen = as_generator(rng)
    if cfg.init == "iid":
        return iid_bootstrap_particles(model, cfg.m, cfg.scheme, SolveConfig(), gen)
    center = np.zeros(model.dim) if cfg.init_center is None else np.asarray(cfg.init_center)
    return center + cfg.init_sigma * gen.standard_normal((cfg.m, model.dim))


def run(model: LossModel, cfg: EngineConfig, rng, init=None):
    """Fit the centroid ensemble; returns ``(CentroidEnsemble, TrainTrace)``.

    ``init`` overrides ``cfg.init`` with an explicit ``(m, dim)`` start.
    """
    cfg.validate()
    init_rng, draw_rng, batch_rng, eval_rng = substreams(rng, 4)
    lr = resolve_lr(model, cfg.lr)
    lr_at = lr if callable(lr) else (lambda t, _lr=float(lr): _lr)

    if init is None:
        thetas = initial_centroids(model, cfg, init_rng)
    else:
        thetas = np.array(init, dtype=float)
        if thetas.shape != (cfg.m, model.dim):
            raise ContractError(f"init must have shape {(cfg.m, model.dim)}")

    trace = TrainTrace(config={k: (v if isinstance(v, (int, float, str, type(None)))
                                   else repr(v)) for k, v in asdict(cfg).items()})
    trace.config["lr_resolved"] = repr(lr)
    if cfg.record_params:
        trace.params.append(thetas.copy())

    n = model.n
    table = None
    for t in range(cfg.steps):
        if t % cfg.refresh_freq == 0:
            draws = sample_weights(cfg.scheme, n, draw_rng, size=cfg.M)
            table = build_assignment(model, thetas, draws)
            q, _ = q_matrix(table)
            v_hat = table.win_fractions()
            eff, guard = effective_weights(q, v_hat, cfg.gamma, cfg.zero_win_policy)
        if cfg.batch is not None and cfg.batch < n:
            batch = batch_rng.choice(n, size=cfg.batch, replace=False)
            step_w = np.zeros_like(eff)
            step_w[batch] = eff[batch] * (n / cfg.batch)
        else:
            step_w = eff
        grads = model.gradients(thetas, step_w)
        thetas = thetas - lr_at(t) * grads

        trace.win_fraction.append(v_hat)
        trace.guard_active.append(guard.copy())
        trace.grad_norm.append(np.linalg.norm(grads, axis=1))
        trace.loss.append(model.loss_matrix(thetas).mean(axis=0))
        if cfg.record_params:
            trace.params.append(thetas.copy())
        if not np.all(np.isfinite(thetas)):
            raise NumericalAbort(f"non-finite centroid at iteration {t}", trace=trace)

    probs = learn_probability_weights(model, thetas, cfg.m_eval, cfg.scheme, eval_rng)
    return CentroidEnsemble(thetas, probs), trace
