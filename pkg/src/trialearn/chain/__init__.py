"""Exact Markov-chain analysis of the learner dynamics on small games."""

from .classify import (
    ContentClass,
    RecurrenceClassification,
    aligned_agents,
    classify_recurrence,
    strongly_connected_components,
    zero_adjacency,
)
from .model import ChainModel, Term, scale_exact, unscale
from .predict import EfficiencyPrediction, class_resistance_bound, predict_efficient_states
from .report import analysis_report, resistance_edge_lines
from .resistance import (
    DEFAULT_FIT_GRID,
    ClassResistances,
    ResistanceFit,
    StateGraph,
    build_state_graph,
    class_resistances,
    edge_resistance,
    fit_resistance_numeric,
)
from .state_space import DEFAULT_STATE_CAP, StateSpace, enumerate_states
from .transitions import TransitionMatrix, build_transition_matrix, stationary_distribution
from .trees import (
    Arborescence,
    Potentials,
    minimum_in_tree,
    potential_table,
    stochastic_potentials,
)
from .verify import FIT_CHECK_GRID, SAMPLE_EPS, StructureReport, verify_structure

__all__ = [
    "ChainModel",
    "Term",
    "scale_exact",
    "unscale",
    "StateSpace",
    "enumerate_states",
    "DEFAULT_STATE_CAP",
    "TransitionMatrix",
    "build_transition_matrix",
    "stationary_distribution",
    "ContentClass",
    "RecurrenceClassification",
    "classify_recurrence",
    "aligned_agents",
    "zero_adjacency",
    "strongly_connected_components",
    "StateGraph",
    "build_state_graph",
    "edge_resistance",
    "fit_resistance_numeric",
    "ResistanceFit",
    "DEFAULT_FIT_GRID",
    "ClassResistances",
    "class_resistances",
    "Arborescence",
    "minimum_in_tree",
    "Potentials",
    "stochastic_potentials",
    "potential_table",
    "EfficiencyPrediction",
    "predict_efficient_states",
    "class_resistance_bound",
    "StructureReport",
    "verify_structure",
    "SAMPLE_EPS",
    "FIT_CHECK_GRID",
    "analysis_report",
    "resistance_edge_lines",
]
