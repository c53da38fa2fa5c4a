"""Learner dynamics: selection, interval rule, broadcast, trajectories."""

from __future__ import annotations

import io
import json
import math

import numpy as np
import pytest

from trialearn import (
    CONTENT,
    DISCONTENT,
    AgentState,
    ConfigError,
    LearnerConfig,
    SplitMix64,
    broadcast_moods,
    render_state,
    run,
    select_action,
    step,
    update_agent_state,
)
from trialearn.learner import (
    SequenceSource,
    all_content,
    all_discontent,
    config_from_dict,
    initial_state,
    load_run_config,
    with_seed,
)
from trialearn.chain import ChainModel, enumerate_states

from conftest import data_file


def counts_of(draws, fn):
    out: dict[int, int] = {}
    for _ in range(draws):
        a = fn()
        out[a] = out.get(a, 0) + 1
    return out


# -- action selection -------------------------------------------------


def test_select_action_content_probabilities():
    rng = SplitMix64(123)
    state = AgentState(action=0, utility=0.5, mood=CONTENT)
    n = 200_000
    counts = counts_of(n, lambda: select_action(state, 3, 0.1, 2.0, rng))
    p_explore = 0.1**2
    for action, expected in ((0, 1 - p_explore), (1, p_explore / 2), (2, p_explore / 2)):
        sigma = math.sqrt(expected * (1 - expected) / n)
        assert abs(counts.get(action, 0) / n - expected) < 3 * sigma


def test_select_action_discontent_uniform():
    rng = SplitMix64(77)
    state = AgentState(action=2, utility=0.5, mood=DISCONTENT)
    n = 200_000
    counts = counts_of(n, lambda: select_action(state, 4, 0.1, 2.0, rng))
    sigma = math.sqrt(0.25 * 0.75 / n)
    for action in range(4):
        assert abs(counts[action] / n - 0.25) < 3 * sigma


def test_select_action_experiment_draw_mapping():
    # first draw below eps^c forces an experiment; the second picks among
    # the others, skipping the baseline
    state = AgentState(action=1, utility=0.5, mood=CONTENT)
    picked = select_action(state, 3, 0.1, 2.0, SequenceSource([0.001, 0.0]))
    assert picked == 0
    picked = select_action(state, 3, 0.1, 2.0, SequenceSource([0.001, 0.9]))
    assert picked == 2


def test_select_action_single_action_stays():
    state = AgentState(action=0, utility=0.5, mood=CONTENT)
    assert select_action(state, 1, 0.1, 2.0, SequenceSource([0.0])) == 0


def test_select_action_rejects_empty_action_set():
    state = AgentState(action=0, utility=0.5, mood=CONTENT)
    with pytest.raises(ConfigError):
        select_action(state, 0, 0.1, 2.0, SequenceSource([]))


# -- interval acceptance rule -----------------------------------------


def test_update_keeps_within_band_without_drawing():
    state = AgentState(action=1, utility=0.6, mood=CONTENT)
    # an empty source raises if any coin were drawn
    out = update_agent_state(state, 1, 0.5, 0.1, 0.1, SequenceSource([]))
    assert out == state


def test_update_boundary_difference_is_retained():
    state = AgentState(action=0, utility=0.5, mood=CONTENT)
    out = update_agent_state(state, 0, 0.4, 0.1, 0.1, SequenceSource([]))
    assert out == state


def test_update_interval_sweep():
    rho = 0.1
    base = 0.5
    state = AgentState(action=0, utility=base, mood=CONTENT)
    for k in range(-14, 15):
        u = base + k * rho / 7.0
        u = min(max(u, 0.0), 1.0 - 1e-9)
        inside = abs(u - base) <= rho + 1e-12
        if inside:
            out = update_agent_state(state, 0, u, rho, 0.1, SequenceSource([]))
            assert out == state
        else:
            out = update_agent_state(state, 0, u, rho, 0.1, SequenceSource([0.999]))
            assert out == AgentState(action=0, utility=u, mood=DISCONTENT)


def test_update_experiment_reevaluates_even_inside_band():
    state = AgentState(action=0, utility=0.5, mood=CONTENT)
    out = update_agent_state(state, 1, 0.5, 0.1, 0.1, SequenceSource([0.999]))
    assert out == AgentState(action=1, utility=0.5, mood=DISCONTENT)


def test_update_mood_coin_threshold():
    # p(content) = eps^(1-u); eps=0.1, u=0.9 -> 0.1^0.1
    state = AgentState(action=0, utility=0.2, mood=DISCONTENT)
    p_content = 0.1**0.1
    assert p_content == pytest.approx(0.7943282347242815, rel=1e-12)
    below = update_agent_state(state, 1, 0.9, 0.1, 0.1, SequenceSource([p_content - 1e-9]))
    assert below.mood == CONTENT
    above = update_agent_state(state, 1, 0.9, 0.1, 0.1, SequenceSource([p_content + 1e-9]))
    assert above.mood == DISCONTENT
    assert below.action == 1 and below.utility == 0.9


def test_update_discontent_always_adopts_played():
    state = AgentState(action=0, utility=0.5, mood=DISCONTENT)
    out = update_agent_state(state, 0, 0.5, 0.1, 0.1, SequenceSource([0.999]))
    assert out == AgentState(action=0, utility=0.5, mood=DISCONTENT)


def test_update_at_eps_zero_never_turns_content():
    state = AgentState(action=0, utility=0.5, mood=DISCONTENT)
    out = update_agent_state(state, 1, 0.7, 0.1, 0.0, SequenceSource([0.0]))
    assert out.mood == DISCONTENT


# -- mood broadcast ---------------------------------------------------


def test_broadcast_unanimous_vectors_draw_nothing():
    assert broadcast_moods([CONTENT, CONTENT], 1e-4, 5e-5, SequenceSource([])) == (
        CONTENT,
        CONTENT,
    )
    assert broadcast_moods([DISCONTENT, DISCONTENT], 1e-4, 5e-5, SequenceSource([])) == (
        DISCONTENT,
        DISCONTENT,
    )


def test_broadcast_mixed_keep_probability():
    p_keep = (1e-4) ** 5e-5
    assert p_keep == pytest.approx(0.9995395890030878, rel=1e-12)
    kept = broadcast_moods(
        [CONTENT, DISCONTENT], 1e-4, 5e-5, SequenceSource([p_keep - 1e-9])
    )
    assert kept == (CONTENT, DISCONTENT)
    flipped = broadcast_moods(
        [CONTENT, DISCONTENT], 1e-4, 5e-5, SequenceSource([p_keep + 1e-9])
    )
    assert flipped == (DISCONTENT, DISCONTENT)


def test_broadcast_discontent_never_recovers():
    out = broadcast_moods(
        [DISCONTENT, CONTENT, DISCONTENT], 1e-4, 5e-5, SequenceSource([0.0])
    )
    assert out[0] == DISCONTENT and out[2] == DISCONTENT


# -- one synchronous round --------------------------------------------


def test_step_scripted_round(example1):
    # both agents discontent; draws: disturbance, two selections, two coins
    state = (
        AgentState(action=0, utility=0.3, mood=DISCONTENT),
        AgentState(action=0, utility=0.4, mood=DISCONTENT),
    )
    rng = SequenceSource([0.3, 0.4, 0.6, 0.5, 0.5])
    new_state, w, profile, payoffs = step(example1, state, 0.1, 2.0, 0.1, rng)
    assert w == 0
    assert profile == (1, 1)
    assert payoffs == (0.80, 0.90)
    # coin 0.5 is under both content thresholds 0.1^0.2 and 0.1^0.1
    assert new_state == (
        AgentState(action=1, utility=0.80, mood=CONTENT),
        AgentState(action=1, utility=0.90, mood=CONTENT),
    )


def test_step_content_interval_fixed_point(example1):
    state = (
        AgentState(action=1, utility=0.8, mood=CONTENT),
        AgentState(action=1, utility=0.9, mood=CONTENT),
    )
    for w_draw in (0.2, 0.8):
        rng = SequenceSource([w_draw, 0.5, 0.5])
        new_state, w, profile, _ = step(example1, state, 0.1, 2.0, 0.1, rng)
        assert profile == (1, 1)
        # the realized payoff differs by at most rho from the benchmark
        assert new_state == state


def test_step_consumes_broadcast_draws_only_when_mixed(example1):
    state = (
        AgentState(action=1, utility=0.8, mood=CONTENT),
        AgentState(action=1, utility=0.9, mood=DISCONTENT),
    )
    # discontent agent plays 1, lands content via coin 0.0; moods now
    # unanimous, so no broadcast draw happens even with beta set
    rng = SequenceSource([0.3, 0.5, 0.6, 0.0])
    new_state, _, _, _ = step(example1, state, 0.1, 2.0, 0.1, rng, beta=5e-5)
    assert all_content(new_state)


# -- full runs --------------------------------------------------------


def short_config(**kw):
    base = dict(epsilon_initial=0.1, c=2.0, iterations=2000, seed=5, rho=0.1)
    base.update(kw)
    return LearnerConfig(**base)


def test_run_is_deterministic(example1):
    a = run(example1, short_config())
    b = run(example1, short_config())
    np.testing.assert_array_equal(a.states, b.states)
    np.testing.assert_array_equal(a.disturbances, b.disturbances)
    assert a.welfare_sum == b.welfare_sum
    assert a.final_epsilon == b.final_epsilon


def test_kernel_matches_reference_loop(example1):
    for kw in (
        {},
        {"beta": 5e-5},
        {"epsilon_decay": 0.999, "seed": 11},
        {"rho": None, "seed": 3},
    ):
        cfg = short_config(iterations=1500, **kw)
        fast = run(example1, cfg)
        slow = run(example1, cfg, rng=SplitMix64(cfg.seed))
        np.testing.assert_array_equal(fast.states, slow.states)
        np.testing.assert_array_equal(fast.disturbances, slow.disturbances)
        assert fast.welfare_sum == slow.welfare_sum
        assert fast.final_epsilon == slow.final_epsilon


def test_seed_changes_trajectory(example1):
    a = run(example1, short_config(seed=1))
    b = run(example1, short_config(seed=2))
    assert not np.array_equal(a.states, b.states)


def test_trace_rows_match_played_profile(example1):
    traj = run(example1, short_config(iterations=500))
    for k in (0, 17, 499):
        state = traj.state_at(k)
        record_profile = tuple(a.action for a in state)
        assert example1.joint_index(record_profile) < example1.n_profiles


def test_histogram_fractions(example1):
    traj = run(example1, short_config())
    hist = traj.histogram()
    total = sum(count for _, count, _ in hist)
    assert total == traj.iterations
    assert sum(fraction for _, _, fraction in hist) == pytest.approx(1.0, abs=1e-9)
    counts = [count for _, count, _ in hist]
    assert counts == sorted(counts, reverse=True)


def test_modal_state_consistency(example1):
    traj = run(example1, short_config())
    state, count, fraction = traj.histogram()[0]
    assert traj.modal_state() == (state, fraction)


def test_states_visited_within_enumeration(example1):
    cfg = short_config(iterations=10_000, epsilon_decay=1.0)
    traj = run(example1, cfg)
    model = ChainModel.create(example1, c=2.0, rho=0.1)
    space = enumerate_states(model)
    for state in traj.states_visited():
        assert state in space.index


def test_records_replay_payoffs(example1):
    cfg = short_config(iterations=300, epsilon_decay=0.999)
    traj = run(example1, cfg)
    records = list(traj.records())
    assert len(records) == 300
    eps = cfg.epsilon_initial
    for k, rec in enumerate(records):
        assert rec.k == k
        assert rec.epsilon == pytest.approx(eps, rel=1e-12)
        expected = tuple(
            float(v) for v in example1.payoffs(rec.profile, rec.disturbance)
        )
        assert rec.payoffs == expected
        eps = max(eps * cfg.epsilon_decay, cfg.epsilon_floor)


def test_average_welfare_matches_sum(example1):
    traj = run(example1, short_config(iterations=400))
    assert traj.average_welfare == pytest.approx(traj.welfare_sum / 400.0)


def test_zero_iterations(example1):
    traj = run(example1, short_config(iterations=0))
    assert traj.iterations == 0
    assert traj.states.shape == (0, 3 * example1.n_agents)
    assert traj.histogram() == []
    fh = io.StringIO()
    traj.to_histogram_csv(fh)
    assert fh.getvalue().strip() == "state_id,state,count,fraction"


def test_histogram_csv_threshold(example1):
    traj = run(example1, short_config())
    fh = io.StringIO()
    traj.to_histogram_csv(fh, threshold=0.5)
    lines = fh.getvalue().strip().splitlines()
    assert lines[0] == "state_id,state,count,fraction"
    for line in lines[1:]:
        assert float(line.rsplit(",", 1)[1]) >= 0.5


def test_summary_dict_fields(example1):
    traj = run(example1, short_config())
    doc = traj.summary_dict()
    for key in (
        "iterations",
        "average_welfare",
        "final_epsilon",
        "distinct_states",
        "modal_state",
        "modal_fraction",
        "rho",
        "verified_rho",
        "warnings",
    ):
        assert key in doc
    assert doc["iterations"] == 2000
    assert not doc["verified_rho"]


def test_epsilon_floor_reached(example1):
    cfg = short_config(iterations=200, epsilon_initial=0.5, epsilon_decay=0.5)
    traj = run(example1, cfg)
    assert traj.final_epsilon == cfg.epsilon_floor


def test_initial_state_shape(example1):
    state = initial_state(example1)
    assert all_discontent(state)
    assert all(a.action == 0 for a in state)


def test_render_state_format():
    state = (
        AgentState(action=1, utility=0.8, mood=CONTENT),
        AgentState(action=0, utility=0.4, mood=DISCONTENT),
    )
    assert render_state(state) == "{[1,0.8,C],[0,0.4,D]}"


# -- verified-mode gate -----------------------------------------------


def test_unverified_c_below_n_warns(example1):
    traj = run(example1, short_config(c=1.5, iterations=10))
    assert any("c" in w for w in traj.warnings)


def test_verified_c_below_n_rejected(example1):
    with pytest.raises(ConfigError, match="c"):
        run(example1, short_config(c=1.5, rho=None, iterations=10))


def test_c_equal_n_warns_in_verified_mode(example1):
    traj = run(example1, short_config(c=2.0, rho=None, iterations=10))
    assert traj.warnings


# -- configuration ----------------------------------------------------


def test_config_validation():
    with pytest.raises(ConfigError):
        short_config(epsilon_initial=0.0)
    with pytest.raises(ConfigError):
        short_config(epsilon_initial=1.0)
    with pytest.raises(ConfigError):
        short_config(epsilon_decay=0.0)
    with pytest.raises(ConfigError):
        short_config(epsilon_decay=1.5)
    with pytest.raises(ConfigError):
        short_config(iterations=-1)
    with pytest.raises(ConfigError):
        short_config(c=0.0)
    with pytest.raises(ConfigError):
        short_config(rho=-0.1)


def test_config_verified_flag():
    assert short_config(rho=None).verified
    assert not short_config(rho=0.2).verified


def test_config_from_packaged_run_file():
    game_path, cfg = load_run_config(str(data_file("example1_run.json")))
    assert game_path == "example1.json"
    assert cfg.epsilon_initial == 0.1
    assert cfg.epsilon_decay == 0.99995
    assert cfg.c == 2.0
    assert cfg.iterations == 1_000_000
    assert cfg.seed == 1
    assert cfg.rho is None
    assert cfg.beta is None


def test_config_from_dict_errors():
    base = {
        "epsilon": {"initial": 0.1},
        "c": 2,
        "iterations": 10,
        "seed": 0,
        "rho": "auto",
    }
    good_path, good = config_from_dict(dict(base))
    assert good_path is None and good.rho is None
    missing = dict(base)
    del missing["seed"]
    with pytest.raises(ConfigError, match="seed"):
        config_from_dict(missing)
    bad_rho = dict(base)
    bad_rho["rho"] = "wide"
    with pytest.raises(ConfigError, match="rho"):
        config_from_dict(bad_rho)
    bad_eps = dict(base)
    bad_eps["epsilon"] = 0.1
    with pytest.raises(ConfigError, match="epsilon"):
        config_from_dict(bad_eps)


def test_with_seed_replaces_only_seed():
    cfg = short_config()
    other = with_seed(cfg, 99)
    assert other.seed == 99
    assert other.epsilon_initial == cfg.epsilon_initial


def test_sequence_source_exhaustion():
    src = SequenceSource([0.1])
    assert src.uniform() == 0.1
    with pytest.raises(IndexError):
        src.uniform()
    cyc = SequenceSource([0.2, 0.7], cycle=True)
    assert [cyc.uniform() for _ in range(4)] == [0.2, 0.7, 0.2, 0.7]


def test_disturbance_frequencies(example1):
    traj = run(example1, short_config(iterations=20_000))
    freq = np.bincount(traj.disturbances, minlength=2) / 20_000
    sigma = math.sqrt(0.25 / 20_000)
    assert abs(freq[0] - 0.5) < 4 * sigma
