"""Round, episode and experiment drivers.

A round runs against a snapshot of every agent's history taken at the round
start; all games of the round resolve in ascending selector order against
that snapshot, and only afterwards does each agent's window absorb its last
action of the round. An episode is a fixed number of rounds followed by one
training pass per model on that episode's buffer, after which buffers are
dropped; nothing learned leaks between episodes except the networks.

Networks are frozen within an episode, which lets the engine stack the
per-agent parameters once per episode and evaluate all agents' value
estimates with a few batched matmuls per round. The stacked path consumes
randomness in exactly the order of the per-agent operations it replaces:
selection draws ascending by selector id, then per game (ascending selector
id) the selector's dilemma draw before the partner's.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from .agent import Agent, make_agent, record_interaction
from .analysis import (CheckpointSnapshot, EpisodeMetrics, RunRecord,
                       build_interaction_network, classify_strategy,
                       degree_centrality, fr_layout, outcome_label,
                       run_record_from_metrics, selection_accuracy)
from .core import (Action, CreditMode, ExperimentConfig, MatchingMode, ONE_HOT,
                   PayoffMatrix, validate_config)
from .qpolicy import train_on_buffer


@dataclass(slots=True)
class GameRecord:
    selector: int
    partner: int
    a_selector: Action
    a_partner: Action
    r_selector: float
    r_partner: float
    selected: bool  # True when the selector actually chose (partner selection mode)


@dataclass
class RoundLog:
    """All games of one round plus the history snapshot they were played
    against (codes[i] is agent i's window at round start, oldest first)."""

    games: list[GameRecord]
    snapshot_codes: np.ndarray  # (n, h) int


@dataclass
class PolicyStacks:
    """Per-agent parameters stacked for batched evaluation; rebuilt whenever
    the networks change (i.e. once per episode)."""

    dil_w1: np.ndarray  # (n, hidden, 2h)
    dil_b1: np.ndarray  # (n, hidden, 1)
    dil_w2: np.ndarray  # (n, 2, hidden)
    dil_b2: np.ndarray  # (n, 2, 1)
    sel_w1: Optional[np.ndarray] = None  # (n, hidden, 2h(n-1))
    sel_b1: Optional[np.ndarray] = None
    sel_w2: Optional[np.ndarray] = None  # (n, n-1, hidden)
    sel_b2: Optional[np.ndarray] = None


def build_stacks(agents: Sequence[Agent], mode: MatchingMode) -> PolicyStacks:
    stacks = PolicyStacks(
        dil_w1=np.stack([a.dilemma_policy.net.w1 for a in agents]),
        dil_b1=np.stack([a.dilemma_policy.net.b1 for a in agents])[:, :, None],
        dil_w2=np.stack([a.dilemma_policy.net.w2 for a in agents]),
        dil_b2=np.stack([a.dilemma_policy.net.b2 for a in agents])[:, :, None],
    )
    if mode is MatchingMode.PARTNER_SELECTION:
        stacks.sel_w1 = np.stack([a.selection_policy.net.w1 for a in agents])
        stacks.sel_b1 = np.stack([a.selection_policy.net.b1 for a in agents])[:, :, None]
        stacks.sel_w2 = np.stack([a.selection_policy.net.w2 for a in agents])
        stacks.sel_b2 = np.stack([a.selection_policy.net.b2 for a in agents])[:, :, None]
    return stacks


@lru_cache(maxsize=8)
def _others_index(n: int) -> np.ndarray:
    # row i lists every other agent id in ascending order
    idx = np.empty((n, n - 1), dtype=np.intp)
    for i in range(n):
        idx[i, :i] = np.arange(i)
        idx[i, i:] = np.arange(i + 1, n)
    return idx


def _payoff_tables(payoff: PayoffMatrix) -> tuple[np.ndarray, np.ndarray]:
    # reward[a_self, a_other]
    own = np.array([[payoff.r, payoff.s], [payoff.t, payoff.p]])
    return own, own.T


def run_round(agents: Sequence[Agent], mode: MatchingMode,
              payoff: PayoffMatrix, rng: np.random.Generator,
              credit_mode: CreditMode = CreditMode.ENSUING_REWARD,
              stacks: Optional[PolicyStacks] = None) -> RoundLog:
    """Play one round and record every transition in the agents' buffers.

    rng is the engine stream, consumed only for random matching; all policy
    draws come from the owning agent's stream.
    """
    n = len(agents)
    h = agents[0].h
    if stacks is None:
        stacks = build_stacks(agents, mode)
    codes = np.array([a.history.codes for a in agents], dtype=np.intp)
    onehot = ONE_HOT[codes].reshape(n, 2 * h)

    sel_states = None
    sel_actions: list[Optional[int]] = [None] * n
    if mode is MatchingMode.PARTNER_SELECTION:
        others = _others_index(n)
        sel_states = onehot[others].reshape(n, 2 * h * (n - 1))
        hid = np.maximum(stacks.sel_w1 @ sel_states[:, :, None] + stacks.sel_b1, 0.0)
        q_sel = (stacks.sel_w2 @ hid + stacks.sel_b2)[:, :, 0]
        pairs = []
        for i, ag in enumerate(agents):
            if ag.rng.random() < ag.selection_policy.epsilon:
                choice = int(ag.rng.integers(n - 1))
            else:
                choice = int(np.argmax(q_sel[i]))
            sel_actions[i] = choice
            pairs.append((i, int(others[i, choice]), True))
    elif mode is MatchingMode.RANDOM_MATCHING:
        pairs = []
        for i in range(n):
            j = int(rng.integers(n - 1))
            pairs.append((i, j if j < i else j + 1, False))
    else:  # TWO_PLAYER_FIXED
        pairs = [(0, 1, False)]

    if h == 1:
        # value table over both one-step states: q_table[i, action, state]
        hid = np.maximum(stacks.dil_w1 @ ONE_HOT.T + stacks.dil_b1, 0.0)
        q_table = stacks.dil_w2 @ hid + stacks.dil_b2
    else:
        q_table = None

    r_self, _ = _payoff_tables(payoff)
    games = []
    last_action = [None] * n
    for i, j, selected in pairs:
        if q_table is not None:
            q_i = q_table[i, :, codes[j, 0]]
            q_j = q_table[j, :, codes[i, 0]]
        else:
            from .nn import forward
            q_i = forward(agents[i].dilemma_policy.net, onehot[j])
            q_j = forward(agents[j].dilemma_policy.net, onehot[i])
        a_i = _dilemma_action(q_i, agents[i])
        a_j = _dilemma_action(q_j, agents[j])
        rew_i = float(r_self[a_i, a_j])
        rew_j = float(r_self[a_j, a_i])
        record_interaction(
            agents[i],
            sel_states[i] if selected else None,
            sel_actions[i],
            onehot[j], Action(a_i), rew_i, credit_mode)
        record_interaction(agents[j], None, None, onehot[i], Action(a_j),
                           rew_j, credit_mode)
        last_action[i] = a_i
        last_action[j] = a_j
        games.append(GameRecord(i, j, Action(a_i), Action(a_j),
                                rew_i, rew_j, selected))

    for i, ag in enumerate(agents):
        if last_action[i] is not None:
            ag.history.push(Action(last_action[i]))
    return RoundLog(games, codes)


def _dilemma_action(q: np.ndarray, agent: Agent) -> int:
    if agent.rng.random() < agent.dilemma_policy.epsilon:
        return int(agent.rng.integers(2))
    return int(q[0] < q[1])  # argmax with ties to the lower index


def run_episode(agents: Sequence[Agent], cfg: ExperimentConfig,
                rng: np.random.Generator, episode: int = 0,
                stacks: Optional[PolicyStacks] = None
                ) -> tuple[EpisodeMetrics, list[RoundLog]]:
    """Play rounds_per_episode rounds, then train every model on its buffer
    and refresh the buffers. Strategy labels reflect the post-training nets.
    """
    if stacks is None:
        stacks = build_stacks(agents, cfg.matching_mode)
    logs = [run_round(agents, cfg.matching_mode, cfg.payoff, rng,
                      cfg.credit_mode, stacks)
            for _ in range(cfg.rounds_per_episode)]
    for ag in agents:
        ag.dilemma_policy = train_on_buffer(
            ag.dilemma_policy, ag.dilemma_buffer, cfg.learning_rate, cfg.train_epochs)
        ag.dilemma_buffer.clear()
        if len(ag.selection_buffer):
            ag.selection_policy = train_on_buffer(
                ag.selection_policy, ag.selection_buffer, cfg.learning_rate,
                cfg.train_epochs)
            ag.selection_buffer.clear()
    return _episode_metrics(agents, cfg, logs, episode), logs


def _episode_metrics(agents: Sequence[Agent], cfg: ExperimentConfig,
                     logs: list[RoundLog], episode: int) -> EpisodeMetrics:
    n = cfg.n_agents
    outcome_counts = np.zeros(4)
    per_agent_reward = np.zeros(n)
    chosen = np.zeros(n)
    total = 0.0
    n_games = 0
    for log in logs:
        for g in log.games:
            outcome_counts[outcome_label(g.a_selector, g.a_partner)] += 1
            per_agent_reward[g.selector] += g.r_selector
            per_agent_reward[g.partner] += g.r_partner
            chosen[g.partner] += 1
            total += g.r_selector + g.r_partner
            n_games += 1
    if cfg.h == 1:
        classes = np.array([int(classify_strategy(ag)) for ag in agents])
        strategy_counts = np.bincount(classes, minlength=4).astype(np.float64)
    else:
        # labels are only defined for one-step histories
        classes = np.full(n, -1)
        strategy_counts = np.zeros(4)
    return EpisodeMetrics(
        episode=episode,
        outcome_pct=outcome_counts / max(n_games, 1),
        selection_accuracy=selection_accuracy(logs),
        total_reward=total,
        per_agent_reward=per_agent_reward,
        strategy_counts=strategy_counts,
        per_agent_selection_count=chosen,
        strategy_classes=classes,
    )


def run_experiment(cfg: ExperimentConfig,
                   metrics_sink: Optional[Callable[[EpisodeMetrics], None]] = None
                   ) -> RunRecord:
    """Run one seeded experiment from scratch and return the full record.

    Seeding: the run's SeedSequence spawns one engine stream, one layout
    stream, and one stream per agent. The layout stream only feeds the
    checkpoint layouts, so requesting checkpoints never changes the
    trajectory. Checkpoint snapshots summarize the interaction network over
    the trailing network_window episodes.
    """
    cfg = validate_config(cfg)
    root = np.random.SeedSequence(cfg.seed)
    children = root.spawn(2 + cfg.n_agents)
    engine_rng = np.random.default_rng(children[0])
    agents = [make_agent(i, cfg, np.random.default_rng(children[2 + i]))
              for i in range(cfg.n_agents)]

    checkpoint_eps = sorted(set(cfg.metrics_checkpoints))
    layout_seeds = children[1].spawn(len(checkpoint_eps))
    layout_for = dict(zip(checkpoint_eps, layout_seeds))
    cp_set = set(checkpoint_eps)

    window: deque[list[RoundLog]] = deque(maxlen=cfg.network_window)
    all_metrics: list[EpisodeMetrics] = []
    snapshots: list[CheckpointSnapshot] = []
    for ep in range(cfg.n_episodes):
        stacks = build_stacks(agents, cfg.matching_mode)
        metrics, logs = run_episode(agents, cfg, engine_rng, ep, stacks)
        window.append(logs)
        all_metrics.append(metrics)
        if metrics_sink is not None:
            metrics_sink(metrics)
        if ep in cp_set:
            flat = [log for ep_logs in window for log in ep_logs]
            network = build_interaction_network(flat, cfg.n_agents)
            snapshots.append(CheckpointSnapshot(
                episode=ep,
                strategies=metrics.strategy_classes.copy(),
                network=network,
                centrality=degree_centrality(network),
                positions=fr_layout(network, np.random.default_rng(layout_for[ep])),
            ))
    return run_record_from_metrics(cfg, cfg.seed, all_metrics, snapshots)
