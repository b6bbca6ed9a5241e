"""Contextual bandit with an ensemble of MLP reward models.

Two ways of building each model's training buffer are compared:

``naive``
    every ``freq`` steps each model appends ``freq`` contexts drawn uniformly
    with replacement from the latest ``freq`` contexts to its own buffer.
``centroid``
    every ``freq`` steps all buffers are rebuilt from the common buffer by
    resampling context ``i`` for model ``j`` with probability proportional
    to ``q[i, j]``; models whose win fraction is at most ``gamma`` train on
    the whole common buffer. Actions are taken by a model drawn from the
    learned win fractions.

Per-model buffers are stored as counts over the common buffer.
"""
from __future__ import annotations

import abc
import csv
import enum
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import ContractError, NumericalAbort, as_generator, substreams
from .engine import closest_sets, win_shares
from .mlp import MlpSpec, RmsPropState, batch_loss_grad, forward, init_params, rmsprop_step
from .resampling import WeightScheme, sample_weights

log = logging.getLogger(__name__)


class Strategy(enum.Enum):
    NAIVE = "naive"
    CENTROID = "centroid"


class BanditEnv(abc.ABC):
    """A source of context sequences with a full reward table.

    ``draw_sequence`` returns ``(contexts, rewards)`` where
    ``rewards[t, a]`` is what action ``a`` would have earned at step ``t``.
    Precomputing the table lets several strategies share one sequence.
    """

    context_dim: int
    num_actions: int

    @abc.abstractmethod
    def draw_sequence(self, horizon: int, rng):
        ...

    @staticmethod
    def optimal_reward(rewards) -> np.ndarray:
        return np.asarray(rewards).max(axis=1)


class SyntheticLinearBandit(BanditEnv):
    """Contexts ``N(0, I)``; reward of action ``a`` is ``beta_a . x + noise``."""

    def __init__(self, context_dim: int = 5, num_actions: int = 4, noise: float = 1.0,
                 env_seed: int = 0):
        self.context_dim = context_dim
        self.num_actions = num_actions
        self.noise = noise
        gen = np.random.default_rng(env_seed)
        self.coef = gen.standard_normal((num_actions, context_dim)) / np.sqrt(context_dim)

    def next_context(self, rng) -> np.ndarray:
        return as_generator(rng).standard_normal(self.context_dim)

    def mean_reward(self, context) -> np.ndarray:
        return np.asarray(context) @ self.coef.T

    def reward(self, context, action: int, rng) -> float:
        return float(self.mean_reward(context)[action]
                     + self.noise * as_generator(rng).standard_normal())

    def draw_sequence(self, horizon: int, rng):
        gen = as_generator(rng)
        X = gen.standard_normal((horizon, self.context_dim))
        R = X @ self.coef.T + self.noise * gen.standard_normal((horizon, self.num_actions))
        return X, R


class ClassificationBandit(BanditEnv):
    """Label-as-action bandit: the correct label pays 1, anything else 0.

    Contexts are streamed in a shuffled order, reshuffled every epoch.
    """

    def __init__(self, features, labels):
        self.features = np.atleast_2d(np.asarray(features, dtype=float))
        labels = np.asarray(labels, dtype=int)
        self.classes, self.labels = np.unique(labels, return_inverse=True)
        self.context_dim = self.features.shape[1]
        self.num_actions = len(self.classes)

    def stream_indices(self, horizon: int, rng) -> np.ndarray:
        gen = as_generator(rng)
        n = len(self.labels)
        epochs = -(-horizon // n) if horizon else 0
        order = np.concatenate([gen.permutation(n) for _ in range(epochs)] or [np.empty(0, int)])
        return order[:horizon].astype(int)

    def draw_sequence(self, horizon: int, rng):
        idx = self.stream_indices(horizon, rng)
        R = np.zeros((len(idx), self.num_actions))
        R[np.arange(len(idx)), self.labels[idx]] = 1.0
        return self.features[idx], R


def load_classification_bandit(csv_path) -> ClassificationBandit:
    """Header row, numeric feature columns, integer label in the last column."""
    feats, labels = [], []
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ContractError(f"{csv_path}: empty file") from None
        width = len(header)
        if width < 2:
            raise ContractError(f"{csv_path}:1: need at least one feature and a label column")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise ContractError(f"{csv_path}:{lineno}: expected {width} fields, got {len(row)}")
            try:
                feats.append([float(v) for v in row[:-1]])
                label = float(row[-1])
            except ValueError as exc:
                raise ContractError(f"{csv_path}:{lineno}: {exc}") from None
            if label != int(label):
                raise ContractError(f"{csv_path}:{lineno}: label {row[-1]!r} is not an integer")
            labels.append(int(label))
    if not feats:
        raise ContractError(f"{csv_path}: no data rows")
    return ClassificationBandit(np.array(feats), np.array(labels))


@dataclass
class BanditConfig:
    m: int = 3
    gamma: float | None = None  # None -> 0.5 / m
    freq: int = 50
    M: int = 100
    train_iters: int = 100
    batch: int = 512
    horizon: int = 2000
    lr: float = 0.1
    rms_decay: float = 0.9
    rms_eps: float = 1e-8
    hidden: tuple = (50, 50)

    def __post_init__(self):
        for name in ("m", "freq", "M", "train_iters", "batch"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be >= 1")
        if self.horizon < 0:
            raise ContractError("horizon must be >= 0")
        if self.gamma is None:
            self.gamma = 0.5 / self.m

    @property
    def resolved_gamma(self) -> float:
        return float(self.gamma)


def select_action(models, spec: MlpSpec, probs, context, rng):
    """Draw a model index from ``probs``; return ``(model, greedy action)``."""
    gen = as_generator(rng)
    probs = np.asarray(probs, dtype=float)
    j = 0 if len(probs) == 1 else int(gen.choice(len(probs), p=probs))
    return j, int(np.argmax(forward(spec, models[j], context)))


def rebuild_buffers(n_common: int, q, win_fraction, gamma: float, rng) -> np.ndarray:
    """Per-model draw counts over the common buffer, shape ``(m, n_common)``.

    Guarded models (win fraction <= gamma) get every entry once; the others
    get ``n_common`` draws with replacement with probabilities ``q[:, j]``
    normalised.
    """
    gen = as_generator(rng)
    q = np.asarray(q, dtype=float).reshape(n_common, -1)
    if np.any(q < 0):
        raise ContractError("q must be non-negative")
    m = q.shape[1]
    counts = np.ones((m, n_common), dtype=np.int64)
    for j in range(m):
        if win_fraction[j] <= gamma:
            continue
        total = q[:, j].sum()
        if total <= 0:
            warnings.warn(f"model {j} has an all-zero q column; using the full buffer",
                          RuntimeWarning)
            continue
        counts[j] = gen.multinomial(n_common, q[:, j] / total)
    return counts


def _train(spec, params, state, X, A, Rw, counts, iters, batch, gen):
    cdf = np.cumsum(counts, dtype=float)
    cdf /= cdf[-1]
    for _ in range(iters):
        idx = np.minimum(np.searchsorted(cdf, gen.random(batch), side="right"), len(cdf) - 1)
        _, g = batch_loss_grad(spec, params, X[idx], A[idx], Rw[idx])
        params = rmsprop_step(state, params, g)
    return params


@dataclass
class BanditTrace:
    model_sampled: list = field(default_factory=list)
    action: list = field(default_factory=list)
    reward: list = field(default_factory=list)
    win_fractions: list = field(default_factory=list)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "model_sampled", "action", "reward", "cumulative"])
            cum = 0.0
            for t, (j, a, r) in enumerate(zip(self.model_sampled, self.action, self.reward)):
                cum += r
                writer.writerow([t, j, a, repr(float(r)), repr(cum)])


def run_bandit(env: BanditEnv, cfg: BanditConfig, strategy, rng, sequence=None, policy=None):
    """Play ``cfg.horizon`` rounds; returns ``(cumulative_reward, BanditTrace)``.

    ``sequence`` supplies a precomputed ``(contexts, rewards)`` pair so that
    strategies can be paired on the same data. ``policy`` is a test hook: a
    callable ``(t, context, rewards_row) -> action`` that bypasses the
    ensemble entirely.
    """
    strategy = Strategy(strategy)
    seq_rng, init_rng, act_rng, draw_rng, buf_rng, train_rng = substreams(rng, 6)
    if sequence is None:
        sequence = env.draw_sequence(cfg.horizon, seq_rng)
    X, R = sequence
    horizon = min(cfg.horizon, len(X))
    trace = BanditTrace()
    if policy is not None:
        total = 0.0
        for t in range(horizon):
            a = int(policy(t, X[t], R[t]))
            trace.model_sampled.append(-1)
            trace.action.append(a)
            trace.reward.append(float(R[t, a]))
            total += R[t, a]
        return float(total), trace

    spec = MlpSpec(env.context_dim, cfg.hidden, env.num_actions)
    m = cfg.m
    models = [init_params(spec, init_rng) for _ in range(m)]
    states = [RmsPropState(spec.n_params, cfg.lr, cfg.rms_decay, cfg.rms_eps) for _ in range(m)]
    probs = np.full(m, 1.0 / m)
    actions = np.zeros(horizon, dtype=int)
    rewards = np.zeros(horizon)
    own_counts = np.zeros((m, horizon), dtype=np.int64)  # naive buffers
    total = 0.0

    for t in range(horizon):
        j, a = select_action(models, spec, probs, X[t], act_rng)
        r = float(R[t, a])
        actions[t], rewards[t] = a, r
        total += r
        trace.model_sampled.append(j)
        trace.action.append(a)
        trace.reward.append(r)

        size = t + 1
        if size % cfg.freq:
            continue
        Xc, Ac, Rc = X[:size], actions[:size], rewards[:size]
        if strategy is Strategy.CENTROID:
            L = np.column_stack([_head_losses(spec, th, Xc, Ac, Rc) for th in models])
            W = sample_weights(WeightScheme.MULTINOMIAL, size, draw_rng, size=cfg.M)
            mask = closest_sets(L, W)
            winners = np.argmax(mask, axis=1)  # lowest tied index
            ind = np.zeros((cfg.M, m))
            ind[np.arange(cfg.M), winners] = 1.0
            wins = ind.sum(axis=0)
            q = W.T @ ind
            q[:, wins > 0] /= wins[wins > 0]
            probs = win_shares(mask)
            counts = rebuild_buffers(size, q, probs, cfg.resolved_gamma, buf_rng)
            trace.win_fractions.append(probs.copy())
        else:
            lo = size - cfg.freq
            for k in range(m):
                picks = buf_rng.integers(lo, size, size=cfg.freq)
                own_counts[k, :size] += np.bincount(picks, minlength=size)
            counts = own_counts[:, :size]
        for k in range(m):
            models[k] = _train(spec, models[k], states[k], Xc, Ac, Rc, counts[k],
                               cfg.train_iters, cfg.batch, train_rng)
            if not np.all(np.isfinite(models[k])):
                raise NumericalAbort(f"model {k} diverged at step {t}", trace=trace)
    return float(total), trace


def _head_losses(spec, params, X, A, R):
    out = forward(spec, params, X)
    return 0.5 * (out[np.arange(len(A)), A] - R) ** 2
