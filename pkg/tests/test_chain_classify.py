"""Recurrence classes against closed-class and predicate oracles."""

from __future__ import annotations

import networkx as nx
import pytest

from trialearn import CONTENT, DISCONTENT, AgentState
from trialearn.chain import aligned_agents, strongly_connected_components, zero_adjacency

from _oracles import aligned_discontent_oracle, closed_zero_classes, stale_agents


# -- strongly connected components ------------------------------------


def scc_as_sets(components):
    return {frozenset(c) for c in components}


def test_tarjan_matches_networkx_on_example(ex1_chain):
    adj = zero_adjacency(ex1_chain["space"])
    mine = scc_as_sets(strongly_connected_components(adj))
    g = nx.DiGraph()
    g.add_nodes_from(range(len(adj)))
    for x, row in enumerate(adj):
        for y in row:
            g.add_edge(x, y)
    theirs = scc_as_sets(nx.strongly_connected_components(g))
    assert mine == theirs


def test_tarjan_handles_hand_graphs():
    cases = [
        [[1], [0], [3], [2]],
        [[1], [2], [0, 3], [3]],
        [[], [0], [1]],
        [[0]],
    ]
    for adj in cases:
        g = nx.DiGraph()
        g.add_nodes_from(range(len(adj)))
        for x, row in enumerate(adj):
            for y in row:
                g.add_edge(x, y)
        assert scc_as_sets(strongly_connected_components(adj)) == scc_as_sets(
            nx.strongly_connected_components(g)
        )


# -- the worked example -----------------------------------------------


def test_example_class_counts(ex1_chain):
    cls = ex1_chain["classification"]
    assert len(cls.d_states) == 12
    by_level = cls.by_level()
    assert len(by_level[0]) == 24
    assert len(by_level[1]) == 8
    assert set(by_level) == {0, 1}
    assert cls.n_classes == 33
    assert len(cls.transient) == 120 - 12 - 32


def test_example_d_class_members(ex1_chain):
    cls = ex1_chain["classification"]
    space = ex1_chain["space"]
    members = {space.states[i] for i in cls.d_states}
    assert members == aligned_discontent_oracle(ex1_chain["game"])


def test_example_level_one_member(ex1_chain):
    cls = ex1_chain["classification"]
    space = ex1_chain["space"]
    target = (
        AgentState(action=2, utility=0.85, mood=CONTENT),
        AgentState(action=1, utility=0.80, mood=CONTENT),
    )
    found = [cc for cc in cls.content if cc.state == target]
    assert len(found) == 1
    assert found[0].level == 1


def test_labels_and_levels(ex1_chain):
    cls = ex1_chain["classification"]
    assert cls.label(0) == "D"
    assert cls.level_of(0) is None
    for class_id in range(1, cls.n_classes):
        level = cls.level_of(class_id)
        assert cls.label(class_id) == f"C{level}"


def test_members_partition_recurrent_states(ex1_chain):
    cls = ex1_chain["classification"]
    seen = set()
    for class_id in range(cls.n_classes):
        members = cls.members(class_id)
        assert not (seen & set(members))
        seen.update(members)
    assert seen == cls.recurrent_states()


def test_class_of_state_consistency(ex1_chain):
    cls = ex1_chain["classification"]
    for class_id in range(cls.n_classes):
        for state_index in cls.members(class_id):
            assert cls.class_of_state[state_index] == class_id


# -- oracles over the random suite ------------------------------------


def test_classes_match_closed_class_oracle(ex1_chain, random_suite):
    for entry in [ex1_chain] + random_suite:
        cls = entry["classification"]
        closed = closed_zero_classes(entry["space"], entry["graph"])
        expected = {frozenset(cls.members(cid)) for cid in range(cls.n_classes)}
        assert set(closed) == expected


def test_content_levels_match_stale_count(ex1_chain, random_suite):
    for entry in [ex1_chain] + random_suite:
        game = entry["game"]
        for cc in entry["classification"].content:
            assert cc.level == len(stale_agents(game, cc.state))


def test_recurrent_content_states_are_singletons(random_suite):
    for entry in random_suite:
        cls = entry["classification"]
        for class_id in range(1, cls.n_classes):
            assert len(cls.members(class_id)) == 1


def test_d_class_is_all_discontent_aligned(random_suite):
    for entry in random_suite[:30]:
        space = entry["space"]
        members = {space.states[i] for i in entry["classification"].d_states}
        assert members == aligned_discontent_oracle(entry["game"])


def test_no_state_left_unclassified(random_suite):
    # every pipeline in the suite classified without raising, and every
    # state landed in exactly one of: a class, the transient set
    for entry in random_suite:
        cls = entry["classification"]
        total = len(cls.recurrent_states()) + len(cls.transient)
        assert total == len(entry["space"])


def test_aligned_agents_example(ex1_chain):
    space = ex1_chain["space"]
    state = (
        AgentState(action=2, utility=0.85, mood=CONTENT),
        AgentState(action=1, utility=0.80, mood=CONTENT),
    )
    # agent 0 matches u((2,1), w=1) = 0.85; agent 1 matches nothing
    assert aligned_agents(space, state) == frozenset({0})


def test_witness_chain_levels_decrease(ex1_chain, random_suite):
    for entry in [ex1_chain] + random_suite[:25]:
        content = entry["classification"].content
        for cc in content:
            if cc.level == 0:
                assert cc.witness is None
            else:
                assert cc.witness is not None
                assert content[cc.witness].level == cc.level - 1
