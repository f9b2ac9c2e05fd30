"""Derived quantities: per-episode metrics, strategy classification from
greedy probes, the selection network with its layout, and cross-run
aggregation.

Nothing here mutates agents or consumes randomness except fr_layout, which
takes its own generator.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from .core import Action, ExperimentConfig, Outcome
from .nn import forward

if TYPE_CHECKING:
    from .agent import Agent
    from .sim import RoundLog


class UnsupportedHistoryLength(ValueError):
    """Strategy classification is defined for one-step histories only."""


class ShapeMismatch(ValueError):
    """Runs being aggregated do not share a common shape."""


class StrategyClass(enum.IntEnum):
    ALLC = 0      # cooperate regardless
    ALLD = 1      # defect regardless
    TFT = 2       # copy the opponent's last action
    REVTFT = 3    # invert the opponent's last action


STRATEGY_NAMES = {
    StrategyClass.ALLC: "ALLC",
    StrategyClass.ALLD: "ALLD",
    StrategyClass.TFT: "TFT",
    StrategyClass.REVTFT: "REVTFT",
}


def outcome_label(a_selector: Action, a_partner: Action) -> Outcome:
    if a_selector == Action.COOPERATE:
        return Outcome.MUTUAL_COOPERATION if a_partner == Action.COOPERATE else Outcome.DECEPTION
    return Outcome.EXPLOITATION if a_partner == Action.COOPERATE else Outcome.MUTUAL_DEFECTION


# probe states for h = 1: opponent cooperated -> [1, 0], defected -> [0, 1]
_AFTER_C = np.array([1.0, 0.0])
_AFTER_D = np.array([0.0, 1.0])

_STRATEGY_TABLE = {
    (Action.COOPERATE, Action.COOPERATE): StrategyClass.ALLC,
    (Action.COOPERATE, Action.DEFECT): StrategyClass.TFT,
    (Action.DEFECT, Action.COOPERATE): StrategyClass.REVTFT,
    (Action.DEFECT, Action.DEFECT): StrategyClass.ALLD,
}


def classify_strategy(agent: "Agent") -> StrategyClass:
    """Label an agent's greedy dilemma policy by probing both h=1 states.

    The probe asks what the agent would play (ties to COOPERATE, the lower
    action index) after seeing the opponent cooperate and after seeing it
    defect; the pair of answers picks one of the four labels.
    """
    if agent.h != 1:
        raise UnsupportedHistoryLength(f"h={agent.h}; classification needs h=1")
    net = agent.dilemma_policy.net
    after_c = Action(int(np.argmax(forward(net, _AFTER_C))))
    after_d = Action(int(np.argmax(forward(net, _AFTER_D))))
    return _STRATEGY_TABLE[(after_c, after_d)]


@dataclass
class EpisodeMetrics:
    """Everything the metrics stream reports about one episode."""

    episode: int
    outcome_pct: np.ndarray            # (4,) fractions in Outcome order, sum 1
    selection_accuracy: float          # nan when the episode had no selections
    total_reward: float
    per_agent_reward: np.ndarray       # (n,)
    strategy_counts: np.ndarray        # (4,) in StrategyClass order
    per_agent_selection_count: np.ndarray  # (n,) times each agent was chosen
    strategy_classes: np.ndarray       # (n,) StrategyClass values per agent


def selection_accuracy(round_logs: Sequence["RoundLog"],
                       snapshots: Optional[Sequence[np.ndarray]] = None) -> float:
    """Fraction of selection decisions whose chosen partner's most recent
    visible action, at the round-start snapshot, was COOPERATE.

    snapshots defaults to the (n, h) code arrays embedded in the logs.
    Returns nan when no game in the logs was a selection.
    """
    if snapshots is None:
        snapshots = [log.snapshot_codes for log in round_logs]
    if len(snapshots) != len(round_logs):
        raise ShapeMismatch("one snapshot per round log required")
    hits = total = 0
    for log, snap in zip(round_logs, snapshots):
        for game in log.games:
            if not game.selected:
                continue
            total += 1
            hits += int(snap[game.partner][-1] == Action.COOPERATE)
    return hits / total if total else float("nan")


@dataclass
class InteractionNetwork:
    """Directed multigraph summary: weights[(i, j)] counts games where i
    faced j as the selector. Self-loops cannot occur."""

    n_agents: int
    weights: dict[tuple[int, int], int] = field(default_factory=dict)


def build_interaction_network(round_logs: Sequence["RoundLog"],
                              n_agents: Optional[int] = None) -> InteractionNetwork:
    """Count selector->partner pairs over a window of round logs."""
    if n_agents is None:
        n_agents = 1 + max(
            (max(g.selector, g.partner) for log in round_logs for g in log.games),
            default=-1,
        )
    weights: dict[tuple[int, int], int] = {}
    for log in round_logs:
        for game in log.games:
            key = (game.selector, game.partner)
            weights[key] = weights.get(key, 0) + 1
    return InteractionNetwork(n_agents, weights)


def degree_centrality(net: InteractionNetwork) -> np.ndarray:
    """Distinct out-neighbors plus distinct in-neighbors, over 2(n-1)."""
    n = net.n_agents
    out_nbrs: list[set[int]] = [set() for _ in range(n)]
    in_nbrs: list[set[int]] = [set() for _ in range(n)]
    for (i, j) in net.weights:
        out_nbrs[i].add(j)
        in_nbrs[j].add(i)
    if n < 2:
        return np.zeros(n)
    return np.array([(len(out_nbrs[i]) + len(in_nbrs[i])) / (2 * (n - 1))
                     for i in range(n)])


def fr_layout(net: InteractionNetwork, rng: np.random.Generator,
              iterations: int = 50) -> np.ndarray:
    """Force-directed positions in the unit box, centered at the origin.

    Classic spring layout: every pair repels with k^2/d, each edge attracts
    with w * d^2 / k, displacement per sweep capped by a linearly cooling
    temperature. Positions are finally recentered and scaled into
    [-0.5, 0.5]^2. Deterministic given the rng state.
    """
    n = net.n_agents
    pos = rng.uniform(-0.5, 0.5, size=(n, 2))
    if n < 2:
        return np.zeros((n, 2))
    w = np.zeros((n, n))
    for (i, j), count in net.weights.items():
        w[i, j] += count
        w[j, i] += count
    k = np.sqrt(1.0 / n)
    t0 = 0.1
    for sweep in range(iterations):
        temp = t0 * (1.0 - sweep / iterations)
        delta = pos[:, None, :] - pos[None, :, :]
        dist = np.sqrt((delta * delta).sum(axis=2))
        np.fill_diagonal(dist, 1.0)
        dist = np.maximum(dist, 1e-9)
        # net per-pair coefficient along delta: repulsion minus attraction
        coef = k * k / (dist * dist) - w * dist / k
        disp = (delta * coef[:, :, None]).sum(axis=1)
        length = np.maximum(np.sqrt((disp * disp).sum(axis=1)), 1e-12)
        pos += disp * (np.minimum(length, temp) / length)[:, None]
    pos -= pos.mean(axis=0)
    spread = np.abs(pos).max()
    if spread > 0:
        pos *= 0.5 / spread
    return pos


# --- flat metric layout, shared by the CSV writers and the aggregator ------

_SCALAR_COLUMNS = ["mc_pct", "ex_pct", "de_pct", "md_pct",
                   "sel_acc", "total_reward",
                   "n_allc", "n_alld", "n_tft", "n_revtft"]


def metric_columns(n_agents: int) -> list[str]:
    return (_SCALAR_COLUMNS
            + [f"reward_agent_{i}" for i in range(n_agents)]
            + [f"selcount_agent_{i}" for i in range(n_agents)])


def metrics_row(m: EpisodeMetrics) -> np.ndarray:
    return np.concatenate([
        m.outcome_pct,
        [m.selection_accuracy, m.total_reward],
        m.strategy_counts,
        m.per_agent_reward,
        m.per_agent_selection_count,
    ])


@dataclass
class CheckpointSnapshot:
    episode: int
    strategies: np.ndarray       # (n,) StrategyClass values
    network: InteractionNetwork
    centrality: np.ndarray       # (n,)
    positions: np.ndarray        # (n, 2)


@dataclass
class RunRecord:
    """One finished run: the full metrics matrix plus checkpoint snapshots."""

    config: ExperimentConfig
    seed: int
    episodes: np.ndarray          # (E,)
    matrix: np.ndarray            # (E, C) in metric_columns order
    strategy_classes: np.ndarray  # (E, n)
    checkpoints: list[CheckpointSnapshot] = field(default_factory=list)


def run_record_from_metrics(cfg: ExperimentConfig, seed: int,
                            per_episode: Sequence[EpisodeMetrics],
                            checkpoints: Optional[list[CheckpointSnapshot]] = None) -> RunRecord:
    episodes = np.array([m.episode for m in per_episode], dtype=np.intp)
    if per_episode:
        matrix = np.stack([metrics_row(m) for m in per_episode])
        classes = np.stack([m.strategy_classes for m in per_episode])
    else:
        matrix = np.empty((0, len(metric_columns(cfg.n_agents))))
        classes = np.empty((0, cfg.n_agents), dtype=int)
    return RunRecord(cfg, seed, episodes, matrix, classes, checkpoints or [])


@dataclass
class AggregateRecord:
    """Sample mean and population standard deviation across runs, per
    episode and metric column."""

    episodes: np.ndarray    # (E,)
    columns: list[str]
    mean: np.ndarray        # (E, C)
    std: np.ndarray         # (E, C)
    n_runs: int


def aggregate_runs(records: Sequence[RunRecord]) -> AggregateRecord:
    if not records:
        raise ShapeMismatch("no runs to aggregate")
    first = records[0]
    for rec in records[1:]:
        if rec.matrix.shape != first.matrix.shape:
            raise ShapeMismatch(
                f"run matrices {rec.matrix.shape} vs {first.matrix.shape}")
        if not np.array_equal(rec.episodes, first.episodes):
            raise ShapeMismatch("episode axes differ between runs")
    stacked = np.stack([rec.matrix for rec in records])
    return AggregateRecord(
        episodes=first.episodes.copy(),
        columns=metric_columns(first.config.n_agents),
        mean=stacked.mean(axis=0),
        std=stacked.std(axis=0, ddof=0),
        n_runs=len(records),
    )
