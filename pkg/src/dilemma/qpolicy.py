"""Q-learning on top of the value network: epsilon-greedy action choice,
one-step TD targets, and training from an episode-scoped replay buffer.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .nn import Network, _grad_step_arrays, forward, forward_batch


class NoValidAction(ValueError):
    """The action mask excludes every action."""


@dataclass
class Transition:
    state: np.ndarray
    action_index: int
    reward: float
    next_state: Optional[np.ndarray] = None  # None marks a terminal transition

    @property
    def terminal(self) -> bool:
        return self.next_state is None


class ReplayBuffer:
    """Transitions of one model for the current episode, in push order.

    Each push links the previous transition to the new state, so the last
    pushed transition is the only terminal one. The buffer is cleared after
    every episode's training pass; experience never crosses episodes.
    """

    __slots__ = ("transitions",)

    def __init__(self):
        self.transitions: list[Transition] = []

    def push(self, state: np.ndarray, action_index: int, reward: float) -> None:
        if self.transitions:
            self.transitions[-1].next_state = state
        self.transitions.append(Transition(state, action_index, reward))

    def clear(self) -> None:
        self.transitions.clear()

    def __len__(self) -> int:
        return len(self.transitions)

    def __iter__(self):
        return iter(self.transitions)


@dataclass
class QPolicy:
    net: Network
    epsilon: float
    gamma: float


def epsilon_greedy_action(policy: QPolicy, state, rng: np.random.Generator,
                          mask: Optional[np.ndarray] = None) -> int:
    """Pick an action index: uniform over valid actions with probability
    epsilon, otherwise the greedy one (ties resolve to the lowest index).

    Consumes one uniform draw always, plus one integer draw when exploring.
    """
    q = forward(policy.net, state)
    if mask is None:
        if rng.random() < policy.epsilon:
            return int(rng.integers(q.shape[0]))
        return int(np.argmax(q))
    valid = np.flatnonzero(np.asarray(mask, dtype=bool))
    if valid.size == 0:
        raise NoValidAction("mask excludes every action")
    if rng.random() < policy.epsilon:
        return int(valid[rng.integers(valid.size)])
    return int(valid[np.argmax(q[valid])])


def td_target(policy: QPolicy, transition: Transition) -> float:
    """One-step return: r for terminal transitions, else r + gamma * max q'."""
    if transition.terminal:
        return float(transition.reward)
    q_next = forward(policy.net, transition.next_state)
    return float(transition.reward + policy.gamma * np.max(q_next))


def train_on_buffer(policy: QPolicy, buffer: ReplayBuffer, lr: float,
                    epochs: int = 1) -> QPolicy:
    """Full-batch TD fitting over the buffer; returns the updated policy.

    Targets are recomputed from the current network at the start of each
    epoch and held fixed through that epoch's step. An empty buffer is a
    no-op. The buffer itself is not cleared here.
    """
    if len(buffer) == 0:
        return policy
    states = np.stack([t.state for t in buffer])
    actions = np.array([t.action_index for t in buffer])
    rewards = np.array([t.reward for t in buffer], dtype=np.float64)
    nonterminal = np.array([not t.terminal for t in buffer])
    next_states = (np.stack([t.next_state for t in buffer if not t.terminal])
                   if nonterminal.any() else None)
    net = policy.net
    for _ in range(epochs):
        targets = rewards.copy()
        if next_states is not None:
            q_next = forward_batch(net, next_states)
            targets[nonterminal] += policy.gamma * q_next.max(axis=1)
        net = _grad_step_arrays(net, states, actions, targets, lr)
    return QPolicy(net, policy.epsilon, policy.gamma)
