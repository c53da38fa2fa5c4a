"""Edge and class resistances: exact values, fits, shortest paths."""

from __future__ import annotations

import itertools
import math

import networkx as nx
import pytest

from trialearn import CONTENT, DISCONTENT, AgentState
from trialearn.chain import (
    ChainModel,
    FIT_CHECK_GRID,
    build_state_graph,
    class_resistances,
    classify_recurrence,
    edge_resistance,
    enumerate_states,
    fit_resistance_numeric,
    scale_exact,
    unscale,
)
from trialearn.errors import VerificationError

from conftest import make_game


WELFARE_MAX = (
    AgentState(action=1, utility=0.8, mood=CONTENT),
    AgentState(action=1, utility=0.9, mood=CONTENT),
)


# -- edge level --------------------------------------------------------


def test_edge_resistance_reads_support(ex1_chain):
    model = ex1_chain["model"]
    graph = ex1_chain["graph"]
    space = ex1_chain["space"]
    for xi in range(0, len(space), 17):
        x = space.states[xi]
        outs = model.support_outcomes(x)
        for y, p in outs.items():
            assert edge_resistance(model, x, y) == p
            assert graph.resistance(xi, space.index[y]) == p
        # a state outside the support has no edge
        for yi in range(0, len(space), 29):
            y = space.states[yi]
            if y not in outs:
                assert graph.resistance(xi, yi) is None


def test_zero_resistance_edges_carry_the_limit_mass(ex1_chain):
    model = ex1_chain["model"]
    space = ex1_chain["space"]
    for xi in range(0, len(space), 11):
        x = space.states[xi]
        support = {y for y, p in model.support_outcomes(x).items() if p == 0}
        positive_limit = {
            y
            for y, terms in model.term_outcomes(x).items()
            if sum(t.limit0() for t in terms) > 0.0
        }
        assert support == positive_limit


def test_fit_recovers_experiment_exponent(ex1_chain):
    model = ex1_chain["model"]
    outs = model.support_outcomes(WELFARE_MAX)
    targets = [y for y, p in outs.items() if p == model.c_power]
    assert targets
    fit = fit_resistance_numeric(model, WELFARE_MAX, targets[0], eps_grid=FIT_CHECK_GRID)
    assert fit.slope == pytest.approx(2.0, abs=0.01)
    assert fit.r_squared > 0.999
    assert not fit.constant and not fit.infinite


def test_fit_recovers_fractional_exponent(ex1_chain):
    # an aligned all-Discontent state can settle on the efficient profile
    # in one step; the exponent is the sum of the mood-coin powers
    model = ex1_chain["model"]
    space = ex1_chain["space"]
    x = space.states[ex1_chain["classification"].d_states[0]]
    r = edge_resistance(model, x, WELFARE_MAX)
    assert r == scale_exact(1.0 - 0.8) + scale_exact(1.0 - 0.9)
    fit = fit_resistance_numeric(model, x, WELFARE_MAX, eps_grid=FIT_CHECK_GRID)
    assert fit.slope == pytest.approx(0.3, abs=0.01)
    assert fit.r_squared > 0.999


def test_fit_flags_unreachable_pairs(ex1_chain):
    model = ex1_chain["model"]
    space = ex1_chain["space"]
    x = space.states[0]
    outs = model.support_outcomes(x)
    y = next(s for s in space.states if s not in outs)
    fit = fit_resistance_numeric(model, x, y)
    assert fit.infinite
    assert fit.probabilities == (0.0,) * len(fit.eps_grid)


def test_fit_flags_constant_probability(ex1_chain):
    model = ex1_chain["model"]
    fit = fit_resistance_numeric(model, WELFARE_MAX, WELFARE_MAX, eps_grid=FIT_CHECK_GRID)
    assert fit.constant
    assert fit.r_squared == 1.0
    assert abs(fit.slope) < 0.01


def test_fit_rejects_short_grid(ex1_chain):
    with pytest.raises(ValueError):
        fit_resistance_numeric(ex1_chain["model"], WELFARE_MAX, WELFARE_MAX, eps_grid=(0.01,))


# -- class level -------------------------------------------------------


def test_content_to_discontent_costs_one_experiment(ex1_chain):
    res = ex1_chain["resistances"]
    c_power = ex1_chain["model"].c_power
    for cid in range(1, res.classification.n_classes):
        assert res.free[cid][0] == c_power
        assert res.direct[cid][0] == c_power


def test_discontent_to_content_costs_the_mood_coins(ex1_chain):
    res = ex1_chain["resistances"]
    cls = ex1_chain["classification"]
    for cid in range(1, cls.n_classes):
        cc = cls.content[cid - 1]
        expect = sum(scale_exact(1.0 - a.utility) for a in cc.state)
        assert res.free[0][cid] == expect


def test_content_pair_resistances_sit_in_the_band(ex1_chain):
    res = ex1_chain["resistances"]
    cls = ex1_chain["classification"]
    c_power = ex1_chain["model"].c_power
    lvl0 = [cid for cid in range(1, cls.n_classes) if cls.level_of(cid) == 0]
    for i, j in itertools.permutations(lvl0, 2):
        assert c_power <= res.free[i][j] <= 2 * c_power
        d = res.direct[i][j]
        assert d is not None and c_power <= d <= 2 * c_power


def test_direct_never_beats_free(ex1_chain):
    res = ex1_chain["resistances"]
    n = res.classification.n_classes
    for i in range(n):
        assert res.free[i][i] is None
        for j in range(n):
            if i == j:
                continue
            assert res.free[i][j] is not None
            d = res.direct[i][j]
            assert d is None or d >= res.free[i][j]


def test_float_views_match_scaled_values(ex1_chain):
    res = ex1_chain["resistances"]
    assert res.free_float(1, 0) == unscale(res.free[1][0])
    assert res.free_float(0, 0) == math.inf
    some_none = next(
        ((i, j) for i in range(res.classification.n_classes)
         for j in range(res.classification.n_classes) if res.direct[i][j] is None),
        None,
    )
    if some_none is not None:
        assert res.direct_float(*some_none) == math.inf


def test_free_resistances_match_networkx_dijkstra(ex1_chain):
    graph = ex1_chain["graph"]
    cls = ex1_chain["classification"]
    res = ex1_chain["resistances"]
    g = nx.DiGraph()
    g.add_nodes_from(range(len(graph.space.states)))
    for x, row in enumerate(graph.edges):
        for t, p in row:
            g.add_edge(x, t, weight=p)
    for source in (0, 1, cls.n_classes - 1):
        lengths = {}
        for v in cls.members(source):
            for t, d in nx.single_source_dijkstra_path_length(g, v).items():
                if t not in lengths or d < lengths[t]:
                    lengths[t] = d
        for target in range(cls.n_classes):
            if target == source:
                continue
            best = min(lengths[v] for v in cls.members(target) if v in lengths)
            assert res.free[source][target] == best


def test_disconnected_chain_is_rejected():
    # one agent, one action: a Content agent never experiments, so the
    # all-Content singleton cannot reach the Discontent class at any eps
    game = make_game([[[0.5]]])
    model = ChainModel.create(game, c=2.0, rho=0.1)
    space = enumerate_states(model)
    graph = build_state_graph(space)
    cls = classify_recurrence(space)
    with pytest.raises(VerificationError, match="cannot reach"):
        class_resistances(graph, cls)
    res = class_resistances(graph, cls, require_connected=False)
    d_class = cls.class_of_state[cls.d_states[0]]
    content_class = 1 - d_class
    assert res.free[content_class][d_class] is None
    assert res.free[d_class][content_class] is not None
