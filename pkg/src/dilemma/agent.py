"""One agent: two independent Q-learners (partner selection and dilemma
play) plus the public action history its peers can see.

State encodings are one-hot per history step, most recent action last:
COOPERATE -> [1, 0], DEFECT -> [0, 1]. The selection state concatenates the
encoded histories of the other agents in ascending id order with the agent
itself skipped, so its length is 2h(n-1).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import Action, AgentId, CreditMode, ExperimentConfig, HistoryWindow, ONE_HOT
from .nn import init_network
from .qpolicy import QPolicy, ReplayBuffer, epsilon_greedy_action

# Fresh dilemma heads start with a uniform positive value offset. Batch
# training re-prices frequently visited state-action cells within a few
# episodes, while cells the buffers rarely visit keep a near-initial value,
# so abandoned actions stay worth retrying until experience prices them.
# The offset sits above the value a sustained mutual-defection stream can
# support under episode-bounded bootstrapping but below a sustained
# mutual-cooperation stream, which lets a population climb out of defection
# lock-ins without making cooperation look worse than its prior.
OPTIMISTIC_VALUE_OFFSET = 35.0


def encode_dilemma_state(history: HistoryWindow, h: int) -> np.ndarray:
    """(2h,) one-hot encoding of one opponent history, oldest step first."""
    if history.h != h:
        raise ValueError(f"history has h={history.h}, expected {h}")
    return ONE_HOT[list(history.codes)].reshape(2 * h)


def encode_selection_state(others: Sequence[HistoryWindow], h: int) -> np.ndarray:
    """(2h(n-1),) concatenation of the other agents' encoded histories."""
    codes = np.array([hist.codes for hist in others], dtype=np.intp)
    if codes.shape != (len(others), h):
        raise ValueError("every history must have exactly h entries")
    return ONE_HOT[codes].reshape(2 * h * len(others))


@dataclass
class Agent:
    id: AgentId
    n_agents: int
    h: int
    selection_policy: QPolicy
    dilemma_policy: QPolicy
    history: HistoryWindow
    selection_buffer: ReplayBuffer
    dilemma_buffer: ReplayBuffer
    rng: np.random.Generator


def make_agent(agent_id: AgentId, cfg: ExperimentConfig,
               rng: np.random.Generator) -> Agent:
    """Build one agent from its private rng stream.

    Draw order is fixed (dilemma net, selection net, history seed) so agent
    construction is reproducible independent of everything else.
    """
    n, h = cfg.n_agents, cfg.h
    dilemma_net = init_network(2 * h, cfg.hidden_size, 2, rng)
    dilemma_net.b2 += OPTIMISTIC_VALUE_OFFSET
    selection_net = init_network(2 * h * (n - 1), cfg.hidden_size, n - 1, rng)
    return Agent(
        id=agent_id,
        n_agents=n,
        h=h,
        selection_policy=QPolicy(selection_net, cfg.epsilon_selection, cfg.gamma),
        dilemma_policy=QPolicy(dilemma_net, cfg.epsilon_dilemma, cfg.gamma),
        history=HistoryWindow.seeded(h, rng),
        selection_buffer=ReplayBuffer(),
        dilemma_buffer=ReplayBuffer(),
        rng=rng,
    )


def partner_id_for_choice(agent_id: AgentId, choice: int) -> AgentId:
    """Map a selection output index to an agent id (self is skipped)."""
    return choice if choice < agent_id else choice + 1


def choose_partner(agent: Agent, snapshot: Sequence[HistoryWindow],
                   rng: Optional[np.random.Generator] = None) -> AgentId:
    """Epsilon-greedy partner choice from the other agents' histories.

    snapshot holds the n-1 visible histories in ascending id order with the
    caller's own removed; the returned id accounts for the gap. Draws come
    from the agent's own stream unless an explicit rng is given.
    """
    state = encode_selection_state(snapshot, agent.h)
    choice = epsilon_greedy_action(agent.selection_policy, state,
                                   agent.rng if rng is None else rng)
    return partner_id_for_choice(agent.id, choice)


def record_interaction(agent: Agent,
                       selection_state: Optional[np.ndarray],
                       selection_action: Optional[int],
                       dilemma_state: np.ndarray,
                       dilemma_action: Action,
                       dilemma_reward: float,
                       credit_mode: CreditMode = CreditMode.ENSUING_REWARD) -> Agent:
    """Store one game's experience in the agent's buffers.

    The dilemma transition is always recorded. A selection transition is
    recorded only when selection_state is given (the agent was the selector
    this round); there is no separate selection reward signal, so the
    selection model is credited with the dilemma reward that followed the
    choice, or with zero under CreditMode.ZERO.
    """
    agent.dilemma_buffer.push(dilemma_state, int(dilemma_action), float(dilemma_reward))
    if selection_state is not None:
        if selection_action is None:
            raise ValueError("selection_state given without selection_action")
        r_s = float(dilemma_reward) if credit_mode is CreditMode.ENSUING_REWARD else 0.0
        agent.selection_buffer.push(selection_state, int(selection_action), r_s)
    return agent
