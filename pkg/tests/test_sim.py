"""Engine semantics: round accounting, snapshot play, history updates,
training schedule, determinism, and equivalence of the batched round with a
reference built purely from the public single-agent operations."""
import numpy as np
import pytest

from dilemma.agent import (choose_partner, encode_dilemma_state,
                           encode_selection_state, make_agent,
                           record_interaction)
from dilemma.core import (Action, CreditMode, ExperimentConfig, HistoryWindow,
                          MatchingMode, PayoffMatrix, payoff_lookup)
from dilemma.nn import Network
from dilemma.qpolicy import epsilon_greedy_action
from dilemma.sim import RoundLog, build_stacks, run_episode, run_experiment, run_round

C, D = Action.COOPERATE, Action.DEFECT
PS = MatchingMode.PARTNER_SELECTION
RM = MatchingMode.RANDOM_MATCHING
TP = MatchingMode.TWO_PLAYER_FIXED


def cfg_for(mode, n=5, **kwargs):
    base = dict(n_agents=n, hidden_size=8, n_episodes=4, matching_mode=mode)
    base.update(kwargs)
    return ExperimentConfig(**base)


def population(cfg):
    """Agents built exactly as run_experiment builds them."""
    root = np.random.SeedSequence(cfg.seed)
    children = root.spawn(2 + cfg.n_agents)
    engine = np.random.default_rng(children[0])
    agents = [make_agent(i, cfg, np.random.default_rng(children[2 + i]))
              for i in range(cfg.n_agents)]
    return engine, agents


def table_net(rows):
    """h=1 dilemma net that is an exact action-value table: q(one_hot(s)) =
    rows[:, s]."""
    rows = np.asarray(rows, dtype=np.float64)
    return Network(w1=np.eye(2), b1=np.zeros(2), w2=rows.copy(), b2=np.zeros(2))


TFT_TABLE = table_net([[1.0, 0.0], [0.0, 1.0]])


def selection_net(n, favorite):
    b2 = np.zeros(n - 1)
    b2[favorite] = 1.0
    return Network(w1=np.zeros((1, 2 * (n - 1))), b1=np.zeros(1),
                   w2=np.zeros((n - 1, 1)), b2=b2)


# --- round accounting -------------------------------------------------------

@pytest.mark.parametrize("mode,n", [(PS, 5), (RM, 6), (TP, 2)])
def test_round_accounting(mode, n):
    cfg = cfg_for(mode, n=n)
    engine, agents = population(cfg)
    log = run_round(agents, mode, cfg.payoff, engine)
    expected_games = 1 if mode is TP else n
    assert len(log.games) == expected_games
    selectors = [g.selector for g in log.games]
    assert selectors == ([0] if mode is TP else list(range(n)))
    for g in log.games:
        assert g.selector != g.partner
        assert 0 <= g.partner < n
        # pair rewards must be one of the three joint payoffs
        assert (g.r_selector, g.r_partner) == payoff_lookup(
            cfg.payoff, g.a_selector, g.a_partner)
    assert log.snapshot_codes.shape == (n, cfg.h)


def test_round_reward_conservation():
    cfg = cfg_for(PS, n=6)
    engine, agents = population(cfg)
    payoff = cfg.payoff
    valid_sums = {2 * payoff.r, payoff.t + payoff.s, 2 * payoff.p}
    for _ in range(5):
        log = run_round(agents, PS, payoff, engine)
        for g in log.games:
            assert g.r_selector + g.r_partner in valid_sums


def test_selected_flag_tracks_mode():
    for mode, expected in [(PS, True), (RM, False)]:
        cfg = cfg_for(mode)
        engine, agents = population(cfg)
        log = run_round(agents, mode, cfg.payoff, engine)
        assert all(g.selected == expected for g in log.games)


# --- snapshot and history semantics ----------------------------------------

def test_round_plays_against_snapshot_and_updates_once():
    """Three TFT agents with engineered selections: every dilemma action must
    equal the opponent's round-start history, and each window must absorb
    only the agent's last-resolved action."""
    cfg = cfg_for(PS, n=3, epsilon_dilemma=0.0, epsilon_selection=0.0)
    engine, agents = population(cfg)
    for ag in agents:
        ag.dilemma_policy.net = table_net([[1.0, 0.0], [0.0, 1.0]])  # copy last
    # 0 selects 2, 1 selects 2, 2 selects 0
    agents[0].selection_policy.net = selection_net(3, 1)
    agents[1].selection_policy.net = selection_net(3, 1)
    agents[2].selection_policy.net = selection_net(3, 0)
    agents[0].history = HistoryWindow(1, [C])
    agents[1].history = HistoryWindow(1, [D])
    agents[2].history = HistoryWindow(1, [C])

    log = run_round(agents, PS, cfg.payoff, engine)
    tuples = [(g.selector, g.partner, g.a_selector, g.a_partner)
              for g in log.games]
    # TFT against the snapshot: actions come from the opponent's round-start
    # window, not from anything played earlier in this same round
    assert tuples == [(0, 2, C, C), (1, 2, C, D), (2, 0, C, C)]
    # agent 2 acted three times (C, D, C); only the last sticks
    assert agents[2].history.codes == (int(C),)
    assert agents[0].history.codes == (int(C),)
    assert agents[1].history.codes == (int(C),)
    assert np.array_equal(log.snapshot_codes.ravel(), [0, 1, 0])


def test_selection_reward_is_the_ensuing_dilemma_reward():
    cfg = cfg_for(PS, n=4)
    engine, agents = population(cfg)
    log = run_round(agents, PS, cfg.payoff, engine)
    by_selector = {g.selector: g for g in log.games}
    for i, ag in enumerate(agents):
        assert len(ag.selection_buffer) == 1
        t = next(iter(ag.selection_buffer))
        assert t.reward == by_selector[i].r_selector
        assert t.state.shape == (2 * cfg.h * (cfg.n_agents - 1),)


def test_zero_credit_mode_blanks_selection_rewards():
    cfg = cfg_for(PS, n=4, credit_mode=CreditMode.ZERO)
    engine, agents = population(cfg)
    run_round(agents, PS, cfg.payoff, engine, credit_mode=CreditMode.ZERO)
    for ag in agents:
        assert all(t.reward == 0.0 for t in ag.selection_buffer)
        assert len(ag.dilemma_buffer) > 0


def test_baseline_modes_record_no_selection_experience():
    for mode, n in [(RM, 5), (TP, 2)]:
        cfg = cfg_for(mode, n=n)
        engine, agents = population(cfg)
        run_round(agents, mode, cfg.payoff, engine)
        assert all(len(ag.selection_buffer) == 0 for ag in agents)


def test_random_matching_pairs_uniformly():
    """Assigned partners are uniform over the other n-1 agents: with n=4,
    each of agent 0's possible partners shows up 1/3 +- 0.02 of the time
    over 10,000 rounds."""
    cfg = cfg_for(RM, n=4, hidden_size=4)
    engine, agents = population(cfg)
    counts = np.zeros(4)
    for _ in range(10_000):
        log = run_round(agents, RM, cfg.payoff, engine)
        counts[log.games[0].partner] += 1
        for ag in agents:
            ag.dilemma_buffer.clear()
    assert counts[0] == 0
    freq = counts[1:] / 10_000
    assert np.all(np.abs(freq - 1.0 / 3.0) < 0.02)


def test_forced_defection_tallies_all_mutual_defection():
    cfg = cfg_for(PS, n=4, epsilon_dilemma=0.0)
    engine, agents = population(cfg)
    for ag in agents:
        ag.dilemma_policy.net = table_net([[0.0, 0.0], [1.0, 1.0]])  # q(D) wins
    metrics, _ = run_episode(agents, cfg, engine)
    assert np.array_equal(metrics.outcome_pct, [0.0, 0.0, 0.0, 1.0])


def test_random_matching_uses_engine_stream_only():
    cfg = cfg_for(RM, n=5, epsilon_dilemma=0.0)
    engine_a, agents_a = population(cfg)
    engine_b, agents_b = population(cfg)
    log_a = run_round(agents_a, RM, cfg.payoff, engine_a)
    log_b = run_round(agents_b, RM, cfg.payoff, engine_b)
    assert [(g.selector, g.partner) for g in log_a.games] == \
           [(g.selector, g.partner) for g in log_b.games]


# --- fast path vs public-operation reference --------------------------------

def reference_round(agents, mode, payoff, engine_rng, credit_mode):
    """Round built only from public per-agent operations, used as the oracle
    for the engine's batched implementation."""
    n = len(agents)
    snapshot = [HistoryWindow(a.h, a.history.codes) for a in agents]
    pairs = []
    sel_state = {}
    sel_action = {}
    if mode is PS:
        for i, ag in enumerate(agents):
            others = [snapshot[j] for j in range(n) if j != i]
            partner = choose_partner(ag, others)
            sel_state[i] = encode_selection_state(others, ag.h)
            sel_action[i] = partner if partner < i else partner - 1
            pairs.append((i, partner, True))
    elif mode is RM:
        for i in range(n):
            k = int(engine_rng.integers(n - 1))
            pairs.append((i, k if k < i else k + 1, False))
    else:
        pairs = [(0, 1, False)]
    games = []
    last = {}
    for i, j, selected in pairs:
        s_i = encode_dilemma_state(snapshot[j], agents[i].h)
        s_j = encode_dilemma_state(snapshot[i], agents[j].h)
        a_i = Action(epsilon_greedy_action(
            agents[i].dilemma_policy, s_i, agents[i].rng))
        a_j = Action(epsilon_greedy_action(
            agents[j].dilemma_policy, s_j, agents[j].rng))
        r_i, r_j = payoff_lookup(payoff, a_i, a_j)
        record_interaction(agents[i], sel_state.get(i), sel_action.get(i),
                           s_i, a_i, r_i, credit_mode)
        record_interaction(agents[j], None, None, s_j, a_j, r_j, credit_mode)
        last[i], last[j] = a_i, a_j
        games.append((i, j, a_i, a_j, r_i, r_j, selected))
    for i, ag in enumerate(agents):
        if i in last:
            ag.history.push(last[i])
    return games


def assert_buffers_equal(a, b):
    assert len(a) == len(b)
    for ta, tb in zip(a, b):
        assert np.array_equal(ta.state, tb.state)
        assert ta.action_index == tb.action_index
        assert ta.reward == tb.reward
        assert ta.terminal == tb.terminal


@pytest.mark.parametrize("mode,n", [(PS, 5), (RM, 6), (TP, 2)])
def test_batched_round_matches_reference(mode, n):
    cfg = cfg_for(mode, n=n, seed=11)
    engine_fast, fast = population(cfg)
    engine_ref, ref = population(cfg)
    for _ in range(3):
        log = run_round(fast, mode, cfg.payoff, engine_fast,
                        credit_mode=cfg.credit_mode)
        expected = reference_round(ref, mode, cfg.payoff, engine_ref,
                                   cfg.credit_mode)
        got = [(g.selector, g.partner, g.a_selector, g.a_partner,
                g.r_selector, g.r_partner, g.selected) for g in log.games]
        assert got == expected
        assert [a.history.codes for a in fast] == [a.history.codes for a in ref]
    for fa, ra in zip(fast, ref):
        assert_buffers_equal(fa.dilemma_buffer, ra.dilemma_buffer)
        assert_buffers_equal(fa.selection_buffer, ra.selection_buffer)


def test_longer_history_round(h=3):
    cfg = cfg_for(PS, n=4, h=h, seed=5)
    engine_fast, fast = population(cfg)
    engine_ref, ref = population(cfg)
    log = run_round(fast, PS, cfg.payoff, engine_fast)
    expected = reference_round(ref, PS, cfg.payoff, engine_ref,
                               cfg.credit_mode)
    got = [(g.selector, g.partner, g.a_selector, g.a_partner,
            g.r_selector, g.r_partner, g.selected) for g in log.games]
    assert got == expected
    assert log.snapshot_codes.shape == (4, h)


# --- episode semantics -------------------------------------------------------

def test_episode_trains_and_refreshes_buffers():
    cfg = cfg_for(PS, n=4, rounds_per_episode=6)
    engine, agents = population(cfg)
    before_d = [ag.dilemma_policy.net.w2.copy() for ag in agents]
    before_s = [ag.selection_policy.net.w2.copy() for ag in agents]
    metrics, logs = run_episode(agents, cfg, engine)
    assert len(logs) == 6
    for k, ag in enumerate(agents):
        assert len(ag.dilemma_buffer) == 0
        assert len(ag.selection_buffer) == 0
        assert not np.array_equal(ag.dilemma_policy.net.w2, before_d[k])
        assert not np.array_equal(ag.selection_policy.net.w2, before_s[k])


def test_episode_metrics_consistency():
    cfg = cfg_for(PS, n=5, rounds_per_episode=7)
    engine, agents = population(cfg)
    metrics, logs = run_episode(agents, cfg, engine, episode=3)
    assert metrics.episode == 3
    assert metrics.outcome_pct.sum() == pytest.approx(1.0)
    assert metrics.total_reward == pytest.approx(metrics.per_agent_reward.sum())
    assert metrics.per_agent_selection_count.sum() == 7 * 5  # one game per selector
    assert metrics.strategy_counts.sum() == 5
    assert 0.0 <= metrics.selection_accuracy <= 1.0
    direct = sum(g.r_selector + g.r_partner for log in logs for g in log.games)
    assert metrics.total_reward == pytest.approx(direct)


def test_episode_metrics_match_bincount_of_classes():
    cfg = cfg_for(PS, n=4)
    engine, agents = population(cfg)
    metrics, _ = run_episode(agents, cfg, engine)
    assert np.array_equal(metrics.strategy_counts,
                          np.bincount(metrics.strategy_classes, minlength=4))


def test_longer_history_episode_has_no_strategy_labels():
    cfg = cfg_for(PS, n=4, h=2)
    engine, agents = population(cfg)
    metrics, _ = run_episode(agents, cfg, engine)
    assert np.all(metrics.strategy_classes == -1)
    assert not metrics.strategy_counts.any()


# --- experiment determinism --------------------------------------------------

def test_experiment_is_deterministic():
    cfg = cfg_for(PS, n=4, n_episodes=6, metrics_checkpoints=(2, 5))
    a = run_experiment(cfg)
    b = run_experiment(cfg)
    assert np.array_equal(a.matrix, b.matrix)
    assert np.array_equal(a.strategy_classes, b.strategy_classes)
    for ca, cb in zip(a.checkpoints, b.checkpoints):
        assert ca.network.weights == cb.network.weights
        assert np.array_equal(ca.positions, cb.positions)
        assert np.array_equal(ca.centrality, cb.centrality)


def test_experiment_seed_changes_trajectory():
    base = cfg_for(PS, n=4, n_episodes=6)
    a = run_experiment(base)
    b = run_experiment(ExperimentConfig(**{**base.__dict__, "seed": 1}))
    assert not np.array_equal(a.matrix, b.matrix)


def test_checkpoints_do_not_disturb_the_trajectory():
    plain = run_experiment(cfg_for(PS, n=4, n_episodes=6))
    with_cp = run_experiment(cfg_for(PS, n=4, n_episodes=6,
                                     metrics_checkpoints=(0, 3)))
    assert np.array_equal(plain.matrix, with_cp.matrix)
    assert len(with_cp.checkpoints) == 2
    assert [cp.episode for cp in with_cp.checkpoints] == [0, 3]


def test_metrics_sink_streams_every_episode():
    seen = []
    cfg = cfg_for(RM, n=4, n_episodes=5)
    record = run_experiment(cfg, metrics_sink=seen.append)
    assert [m.episode for m in seen] == list(range(5))
    assert np.array_equal(record.episodes, np.arange(5))


def test_zero_episode_run_is_vacuous():
    cfg = cfg_for(PS, n=4, n_episodes=0)
    record = run_experiment(cfg)
    assert record.episodes.size == 0
    assert record.matrix.shape[0] == 0
    assert record.strategy_classes.shape == (0, 4)
    assert record.checkpoints == []


def test_checkpoint_network_covers_recent_window_only():
    cfg = cfg_for(PS, n=4, n_episodes=5, rounds_per_episode=2,
                  network_window=3, metrics_checkpoints=(4,))
    record = run_experiment(cfg)
    net = record.checkpoints[0].network
    # 3 episodes x 2 rounds x 4 games in the window
    assert sum(net.weights.values()) == 3 * 2 * 4
