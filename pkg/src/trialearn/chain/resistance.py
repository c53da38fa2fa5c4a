"""Resistance arithmetic on the perturbed chain.

Edge resistances are minimum epsilon-exponents of one-step transition
probabilities, kept as exact scaled integers (see chain.model.SCALE).
Class-to-class resistances are cheapest-path sums between recurrence
classes, computed in two variants:

  free    intermediate states are unrestricted (the quantity used by
          tree surgery and stochastic potentials);
  direct  paths may not pass through states of a third recurrence class,
          matching the stepwise-escape reading of inter-class bounds.

A numeric cross-check fits log transition probability against log eps
over a grid and reports slope and fit quality.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from ..errors import VerificationError
from ..learner import SystemState
from .classify import RecurrenceClassification
from .model import ChainModel, unscale
from .state_space import StateSpace

#: log-eps grid for numeric slope checks: 10^-2 .. 10^-4, half-decade steps
DEFAULT_FIT_GRID: tuple[float, ...] = tuple(10.0 ** e for e in (-2.0, -2.5, -3.0, -3.5, -4.0))

#: below this spread of log-probabilities the slope is numerically zero
#: and r-squared is meaningless; the fit is reported as constant
FLAT_LOG_RANGE = 0.05


def edge_resistance(model: ChainModel, x: SystemState, y: SystemState) -> int | None:
    """Exact scaled resistance of the one-step edge x -> y.

    None means y is not reachable from x in one step at any eps > 0.
    """
    return model.support_outcomes(x).get(y)


@dataclass(frozen=True)
class StateGraph:
    """Minimum-exponent digraph over the enumerated state space."""

    space: StateSpace
    edges: tuple[tuple[tuple[int, int], ...], ...]  # per state: (target, power)

    def resistance(self, x: int, y: int) -> int | None:
        for t, p in self.edges[x]:
            if t == y:
                return p
        return None


def build_state_graph(space: StateSpace) -> StateGraph:
    rows = []
    for x in space.states:
        outs = space.model.support_outcomes(x)
        rows.append(tuple(sorted((space.index[y], p) for y, p in outs.items())))
    return StateGraph(space=space, edges=tuple(rows))


@dataclass(frozen=True)
class ResistanceFit:
    """Log-log slope estimate of a one-step transition probability."""

    slope: float
    r_squared: float
    prefactor: float
    eps_grid: tuple[float, ...]
    probabilities: tuple[float, ...]
    constant: bool  # log-probabilities flat across the grid

    @property
    def infinite(self) -> bool:
        return math.isinf(self.slope)


def fit_resistance_numeric(
    model: ChainModel,
    x: SystemState,
    y: SystemState,
    eps_grid: tuple[float, ...] | None = None,
) -> ResistanceFit:
    """Least-squares slope of log P(x -> y) against log eps.

    A vanishing probability anywhere on the grid yields an infinite
    slope. When the log-probabilities span less than FLAT_LOG_RANGE the
    residual-based r-squared is undefined; such fits report r_squared 1.0
    with the constant flag set.
    """
    grid = tuple(eps_grid) if eps_grid is not None else DEFAULT_FIT_GRID
    if len(grid) < 2:
        raise ValueError("eps_grid needs at least two points")
    probs = tuple(model.transition_probability(x, y, e) for e in grid)
    if any(p <= 0.0 for p in probs):
        return ResistanceFit(
            slope=math.inf,
            r_squared=1.0,
            prefactor=0.0,
            eps_grid=grid,
            probabilities=probs,
            constant=False,
        )
    lx = np.log(np.asarray(grid))
    ly = np.log(np.asarray(probs))
    slope, intercept = np.polyfit(lx, ly, 1)
    fitted = slope * lx + intercept
    ss_res = float(np.sum((ly - fitted) ** 2))
    ss_tot = float(np.sum((ly - np.mean(ly)) ** 2))
    spread = float(ly.max() - ly.min())
    if spread < FLAT_LOG_RANGE:
        r2 = 1.0
        constant = True
    else:
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 1.0
        constant = False
    return ResistanceFit(
        slope=float(slope),
        r_squared=r2,
        prefactor=float(math.exp(intercept)),
        eps_grid=grid,
        probabilities=probs,
        constant=constant,
    )


@dataclass(frozen=True)
class ClassResistances:
    """Cheapest inter-class resistances, exact scaled integers.

    free[i][j] is the unrestricted minimum; direct[i][j] forbids states
    of any third recurrence class along the way and is None when every
    route needs such a stop.
    """

    classification: RecurrenceClassification
    free: tuple[tuple[int | None, ...], ...]
    direct: tuple[tuple[int | None, ...], ...]

    def free_float(self, i: int, j: int) -> float:
        r = self.free[i][j]
        return math.inf if r is None else unscale(r)

    def direct_float(self, i: int, j: int) -> float:
        r = self.direct[i][j]
        return math.inf if r is None else unscale(r)


def _dijkstra_from_class(
    graph: StateGraph,
    classification: RecurrenceClassification,
    source: int,
    direct: bool,
) -> list[int | None]:
    """Cheapest resistance from class `source` to every class.

    With direct=True, states belonging to a recurrence class other than
    the source are absorbing: their distance still scores the target
    class but their out-edges are not relaxed.
    """
    n_states = len(graph.space.states)
    n_classes = classification.n_classes
    class_of = classification.class_of_state
    dist: list[int | None] = [None] * n_states
    heap: list[tuple[int, int]] = []
    for v in classification.members(source):
        dist[v] = 0
        heapq.heappush(heap, (0, v))
    best: list[int | None] = [None] * n_classes
    while heap:
        d, v = heapq.heappop(heap)
        if dist[v] is None or d > dist[v]:
            continue
        cv = class_of.get(v)
        if cv is not None and cv != source and (best[cv] is None or d < best[cv]):
            best[cv] = d
        if direct and cv is not None and cv != source:
            continue
        for t, p in graph.edges[v]:
            nd = d + p
            if dist[t] is None or nd < dist[t]:
                dist[t] = nd
                heapq.heappush(heap, (nd, t))
    return best


def class_resistances(
    graph: StateGraph,
    classification: RecurrenceClassification,
    require_connected: bool = True,
) -> ClassResistances:
    """All pairwise class resistances in both variants.

    require_connected demands every ordered pair be finitely connected in
    the free variant; a gap there means the perturbed chain is reducible,
    which the supported dynamics rule out.
    """
    n_classes = classification.n_classes
    free_rows = []
    direct_rows = []
    for ci in range(n_classes):
        free_rows.append(tuple(_dijkstra_from_class(graph, classification, ci, False)))
        direct_rows.append(tuple(_dijkstra_from_class(graph, classification, ci, True)))
    if require_connected:
        for i in range(n_classes):
            for j in range(n_classes):
                if i != j and free_rows[i][j] is None:
                    raise VerificationError(
                        "recurrence class "
                        f"{classification.label(i)} cannot reach "
                        f"{classification.label(j)} at any eps > 0; "
                        "the perturbed chain is reducible"
                    )
    return ClassResistances(
        classification=classification,
        free=tuple(free_rows),
        direct=tuple(direct_rows),
    )
