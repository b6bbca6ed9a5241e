"""A small ReLU feed-forward network with hand-written backprop and RMSprop.

Parameters live in one flat vector so a network can be treated as a
``LossModel`` point. Layer ``k`` stores its ``(fan_in, fan_out)`` weight
matrix followed by its bias.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ContractError, LossModel, as_generator


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden: tuple = (50, 50)
    output_dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if min((self.input_dim, self.output_dim) + self.hidden) < 1:
            raise ContractError("all layer sizes must be >= 1")

    @property
    def sizes(self) -> tuple:
        return (self.input_dim,) + self.hidden + (self.output_dim,)

    @property
    def n_params(self) -> int:
        s = self.sizes
        return sum((a + 1) * b for a, b in zip(s[:-1], s[1:]))

    def layout(self) -> list:
        """``[(weight_slice, bias_slice, (fan_in, fan_out)), ...]`` per layer."""
        out, pos = [], 0
        s = self.sizes
        for a, b in zip(s[:-1], s[1:]):
            w = slice(pos, pos + a * b)
            pos += a * b
            out.append((w, slice(pos, pos + b), (a, b)))
            pos += b
        return out


def init_params(spec: MlpSpec, rng) -> np.ndarray:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases."""
    gen = as_generator(rng)
    theta = np.empty(spec.n_params)
    for ws, bs, (fan_in, _) in spec.layout():
        bound = 1.0 / np.sqrt(fan_in)
        theta[ws] = gen.uniform(-bound, bound, ws.stop - ws.start)
        theta[bs] = gen.uniform(-bound, bound, bs.stop - bs.start)
    return theta


def _unpack(spec, params):
    params = np.asarray(params, dtype=float)
    if params.shape != (spec.n_params,):
        raise ContractError(f"expected {spec.n_params} parameters, got shape {params.shape}")
    return [(params[ws].reshape(shape), params[bs]) for ws, bs, shape in spec.layout()]


def _forward_cache(spec, params, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != spec.input_dim:
        raise ContractError(f"input has {X.shape[1]} features, network expects {spec.input_dim}")
    layers = _unpack(spec, params)
    acts = [X]
    h = X
    for k, (W, b) in enumerate(layers):
        z = h @ W + b
        h = z if k == len(layers) - 1 else np.maximum(z, 0.0)
        acts.append(h)
    return layers, acts


def forward(spec: MlpSpec, params, x) -> np.ndarray:
    """Network output for one input (1-D) or a batch (2-D)."""
    x = np.asarray(x, dtype=float)
    _, acts = _forward_cache(spec, params, x)
    return acts[-1][0] if x.ndim == 1 else acts[-1]


def _backward(spec, layers, acts, delta):
    """Per-example gradients ``(B, n_params)`` given ``dLoss/dOutput`` rows."""
    B = delta.shape[0]
    grads = np.empty((B, spec.n_params))
    for k in range(len(layers) - 1, -1, -1):
        ws, bs, _ = spec.layout()[k]
        h_in = acts[k]
        grads[:, ws] = (h_in[:, :, None] * delta[:, None, :]).reshape(B, -1)
        grads[:, bs] = delta
        if k:
            delta = (delta @ layers[k][0].T) * (acts[k] > 0)
    return grads


def _selected_residual(spec, params, X, actions, targets):
    layers, acts = _forward_cache(spec, params, X)
    out = acts[-1]
    actions = np.asarray(actions, dtype=int)
    rows = np.arange(len(out))
    resid = out[rows, actions] - np.asarray(targets, dtype=float)
    return layers, acts, rows, actions, resid


def per_example_grad(spec: MlpSpec, params, x, target, action: int = 0) -> np.ndarray:
    """Gradient of ``(f(x)[action] - target)**2 / 2`` w.r.t. all parameters."""
    return per_example_grads(spec, params, np.atleast_2d(x), [action], [target])[0]


def per_example_grads(spec, params, X, actions, targets) -> np.ndarray:
    layers, acts, rows, actions, resid = _selected_residual(spec, params, X, actions, targets)
    delta = np.zeros_like(acts[-1])
    delta[rows, actions] = resid
    return _backward(spec, layers, acts, delta)


def batch_loss_grad(spec, params, X, actions, targets, weights=None):
    """Weighted mean squared-error loss on the selected heads and its gradient.

    Cheaper than averaging :func:`per_example_grads` since the batch
    dimension is reduced inside each matrix product.
    """
    layers, acts, rows, actions, resid = _selected_residual(spec, params, X, actions, targets)
    B = len(resid)
    w = np.ones(B) if weights is None else np.asarray(weights, dtype=float)
    loss = 0.5 * float(w @ resid ** 2) / B
    delta = np.zeros_like(acts[-1])
    delta[rows, actions] = w * resid / B
    grad = np.empty(spec.n_params)
    lay = spec.layout()
    for k in range(len(layers) - 1, -1, -1):
        ws, bs, _ = lay[k]
        grad[ws] = (acts[k].T @ delta).ravel()
        grad[bs] = delta.sum(axis=0)
        if k:
            delta = (delta @ layers[k][0].T) * (acts[k] > 0)
    return loss, grad


@dataclass
class RmsPropState:
    n_params: int
    lr: float = 0.1
    decay: float = 0.9
    eps: float = 1e-8
    acc: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.acc is None:
            self.acc = np.zeros(self.n_params)


def rmsprop_step(state: RmsPropState, params, grad) -> np.ndarray:
    grad = np.asarray(grad, dtype=float)
    state.acc = state.decay * state.acc + (1.0 - state.decay) * grad ** 2
    return np.asarray(params, dtype=float) - state.lr * grad / (np.sqrt(state.acc) + state.eps)


class MlpRegression(LossModel):
    """Reward regression on logged ``(context, action, reward)`` triples.

    The per-point loss is the squared error of the taken action's output.
    """

    def __init__(self, spec: MlpSpec, contexts, actions, rewards):
        self.spec = spec
        self.X = np.atleast_2d(np.asarray(contexts, dtype=float))
        self.actions = np.asarray(actions, dtype=int)
        self.rewards = np.asarray(rewards, dtype=float)
        self.n = len(self.X)
        self.dim = spec.n_params
        if not (len(self.actions) == len(self.rewards) == self.n):
            raise ContractError("contexts, actions and rewards must have equal length")

    def per_point_losses(self, theta):
        *_, resid = _selected_residual(self.spec, theta, self.X, self.actions, self.rewards)
        return 0.5 * resid ** 2

    def per_point_gradients(self, theta):
        return per_example_grads(self.spec, theta, self.X, self.actions, self.rewards)

    def gradient(self, theta, w):
        w = np.asarray(w, dtype=float)
        _, g = batch_loss_grad(self.spec, theta, self.X, self.actions, self.rewards, w)
        return g

    def gradients(self, thetas, weights):
        weights = np.asarray(weights, dtype=float).reshape(self.n, -1)
        return np.stack([self.gradient(t, weights[:, j]) for j, t in enumerate(np.atleast_2d(thetas))])
