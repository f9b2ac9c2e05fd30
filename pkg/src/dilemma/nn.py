"""One-hidden-layer value network trained by full-batch gradient descent.

The network maps a state vector to one value estimate per action:
q = w2 @ relu(w1 @ s + b1) + b2. Training minimizes mean squared error on
the taken-action outputs only; the other outputs receive no gradient.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DimensionMismatch(ValueError):
    """Input shapes are inconsistent with the network's dimensions."""


class NonFiniteLoss(FloatingPointError):
    """Training loss left the finite range (divergence guard)."""


@dataclass
class Network:
    w1: np.ndarray  # (hidden, input)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (output, hidden)
    b2: np.ndarray  # (output,)

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.w1.shape[0]

    @property
    def output_dim(self) -> int:
        return self.w2.shape[0]


def init_network(input_dim: int, hidden_size: int, output_dim: int,
                 rng: np.random.Generator) -> Network:
    """Gaussian weights scaled by 1/sqrt(fan_in), zero biases.

    Consumes exactly two normal draws from rng, w1 first, then w2.
    """
    if min(input_dim, hidden_size, output_dim) < 1:
        raise DimensionMismatch("all dimensions must be >= 1")
    w1 = rng.normal(0.0, 1.0 / np.sqrt(input_dim), (hidden_size, input_dim))
    w2 = rng.normal(0.0, 1.0 / np.sqrt(hidden_size), (output_dim, hidden_size))
    return Network(w1, np.zeros(hidden_size), w2, np.zeros(output_dim))


def parameter_count(net: Network) -> int:
    return net.w1.size + net.b1.size + net.w2.size + net.b2.size


def parameter_vector(net: Network) -> np.ndarray:
    """All parameters as one flat array, (w1, b1, w2, b2) row-major."""
    return np.concatenate([net.w1.ravel(), net.b1, net.w2.ravel(), net.b2])


def save_parameters(net: Network, path) -> None:
    """Debugging aid: text dump of the flat parameter vector."""
    np.savetxt(path, parameter_vector(net))


def _as_state(net: Network, state) -> np.ndarray:
    s = np.asarray(state, dtype=np.float64)
    if s.shape != (net.input_dim,):
        raise DimensionMismatch(
            f"state shape {s.shape}, expected ({net.input_dim},)")
    return s


def forward(net: Network, state) -> np.ndarray:
    """Value estimates for every action in the given state."""
    s = _as_state(net, state)
    hidden = np.maximum(net.w1 @ s + net.b1, 0.0)
    return net.w2 @ hidden + net.b2


def forward_batch(net: Network, states: np.ndarray) -> np.ndarray:
    """Row-wise forward pass: (B, input_dim) -> (B, output_dim)."""
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 2 or states.shape[1] != net.input_dim:
        raise DimensionMismatch(
            f"states shape {states.shape}, expected (B, {net.input_dim})")
    hidden = np.maximum(states @ net.w1.T + net.b1, 0.0)
    return hidden @ net.w2.T + net.b2


def _grad_step_arrays(net: Network, states: np.ndarray, actions: np.ndarray,
                      targets: np.ndarray, lr: float) -> Network:
    batch = states.shape[0]
    z = states @ net.w1.T + net.b1
    hidden = np.maximum(z, 0.0)
    q = hidden @ net.w2.T + net.b2
    rows = np.arange(batch)
    err = q[rows, actions] - targets
    loss = float(np.mean(err * err))
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"loss is {loss}")
    # dL/dq is nonzero only at each sample's taken action
    gq = np.zeros_like(q)
    gq[rows, actions] = 2.0 * err / batch
    gw2 = gq.T @ hidden
    gb2 = gq.sum(axis=0)
    gz = (gq @ net.w2) * (z > 0.0)
    gw1 = gz.T @ states
    gb1 = gz.sum(axis=0)
    return Network(net.w1 - lr * gw1, net.b1 - lr * gb1,
                   net.w2 - lr * gw2, net.b2 - lr * gb2)


def grad_step(net: Network, batch, lr: float) -> Network:
    """One full-batch descent step on (state, action index, target) triples.

    Returns a new Network; the input network is left untouched.
    """
    triples = list(batch)
    if not triples:
        raise DimensionMismatch("empty batch")
    states = np.stack([_as_state(net, s) for s, _, _ in triples])
    actions = np.array([int(a) for _, a, _ in triples])
    if actions.min() < 0 or actions.max() >= net.output_dim:
        raise DimensionMismatch("action index outside output range")
    targets = np.array([float(t) for _, _, t in triples])
    return _grad_step_arrays(net, states, actions, targets, lr)
