"""Machine checks of the chain-level theory on a concrete game.

verify_structure builds the full analysis pipeline (state space,
transition support, recurrence classes, class resistances, potentials)
and evaluates a battery of structural checks:

  rows_stochastic        numeric transition rows sum to one
  irreducible            support digraph strongly connected
  aperiodic              a zero-resistance self-loop exists (or cycle
                         lengths have gcd one)
  entrywise_limit        eps^(-r) * P(eps) approaches a positive constant
  fit_matches_analytic   log-log slope fits agree with exact exponents
  classification_clean   recurrence classes have the supported shapes
  potential_formula      gamma(z) = c*(L-1) + sum_i(1 - u_i(z)) for every
                         level-0 content class (L = content-class count)
  efficiency_gap         the minimum potential is attained only at
                         level-0 content classes, never at D or level>=1
  band_row1..band_row67  inter-class resistance equalities and bounds

The welfare-argmax prediction is cross-checked as well but reported
separately: it is a characterization of which level-0 class wins, not a
structural property, and it can genuinely fail while everything above
holds. It never affects the pass verdict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..errors import ClassificationError, ConfigError, VerificationError
from ..games import Game, check_interdependence, compute_rho
from ..learner import render_state
from .classify import RecurrenceClassification, classify_recurrence, strongly_connected_components
from .model import ChainModel, scale_exact, unscale
from .predict import EfficiencyPrediction, class_resistance_bound, predict_efficient_states
from .resistance import (
    ClassResistances,
    StateGraph,
    build_state_graph,
    class_resistances,
    fit_resistance_numeric,
)
from .state_space import DEFAULT_STATE_CAP, StateSpace, enumerate_states
from .transitions import build_transition_matrix
from .trees import Potentials, stochastic_potentials

#: eps values where numeric row sums and limits are probed
SAMPLE_EPS: tuple[float, ...] = (1e-2, 1e-3)

#: steep grid keeping slow (1 - eps^q) prefactors out of slope estimates
FIT_CHECK_GRID: tuple[float, ...] = tuple(10.0 ** e for e in (-18.0, -19.0, -20.0, -21.0, -22.0))

FIT_TOLERANCE = 0.05
MAX_SAMPLED_EDGES = 12

#: smallest eps a limit certificate may probe without risking underflow
LIMIT_EPS_FLOOR = 1e-250


def _limit_certified(model: ChainModel, x, y, power: int) -> bool:
    """Certify 0 < lim eps^(-r) P(x,y;eps) < infinity from the terms.

    The decomposition P = sum const*eps^q*prod(1-eps^b) gives the limit
    sum of the minimum-exponent consts; the deviation of eps^(-r)P from
    it is bounded by sum(const*sum(eps^b)) over minimum-exponent terms
    plus sum(const*eps^(q-r)) over the rest. The check succeeds once the
    bound certifies the limit positive and the probe lands inside it.
    """
    terms = model.term_outcomes(x).get(y)
    if not terms:
        return False
    r = unscale(power)
    c0 = sum(t.const for t in terms if t.power == power)
    if c0 <= 0.0:
        return False
    eps = 1e-12
    if r > 0:
        eps = max(eps, LIMIT_EPS_FLOOR ** (1.0 / r))
    for _ in range(6):
        bound = 0.0
        for t in terms:
            if t.power == power:
                bound += t.const * sum(eps**b for b in t.one_minus)
            else:
                bound += t.const * eps ** unscale(t.power - power)
        if bound <= 0.5 * c0:
            p = model.transition_probability(x, y, eps)
            scaled = p / eps**r if r > 0 else p
            return abs(scaled - c0) <= bound * (1.0 + 1e-9) + 1e-12 * c0
        shrink = eps * 1e-6
        if r > 0 and shrink**r < LIMIT_EPS_FLOOR:
            return False
        eps = shrink
    return False


@dataclass
class StructureReport:
    """Outcome of the structural checks plus the objects they ran on."""

    verified: bool
    c: float
    rho: float
    beta: float | None
    checks: dict[str, bool]
    extras: dict[str, object]
    space: StateSpace = field(repr=False)
    classification: RecurrenceClassification | None = field(repr=False)
    resistances: ClassResistances | None = field(repr=False)
    potentials: Potentials | None = field(repr=False)
    prediction: EfficiencyPrediction = field(repr=False)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def failures(self) -> list[str]:
        return [name for name, ok in self.checks.items() if not ok]


def _sample_edges(graph: StateGraph) -> list[tuple[int, int, int]]:
    """Deterministic spread across the resistance spectrum."""
    edges = []
    for x, row in enumerate(graph.edges):
        for y, p in row:
            edges.append((p, x, y))
    edges.sort()
    if len(edges) <= MAX_SAMPLED_EDGES:
        return [(x, y, p) for p, x, y in edges]
    third = MAX_SAMPLED_EDGES // 3
    mid = len(edges) // 2
    picked = edges[:third] + edges[mid : mid + third] + edges[-third:]
    return [(x, y, p) for p, x, y in picked]


def _representable_grid(model: ChainModel, x, y, grid: tuple[float, ...]) -> tuple[float, ...]:
    """Coarsen the probe grid until the edge probability stays a normal float.

    A steep exponent pushes eps**r below float64 range on the default
    grid; shifting every point up by whole decades keeps the log spacing
    the slope fit relies on.
    """
    g = tuple(grid)
    while min(model.transition_probability(x, y, e) for e in g) < 1e-280:
        if max(g) * 1e3 > 1e-2:
            break
        g = tuple(e * 1e3 for e in g)
    return g


def verify_structure(
    game: Game,
    c: float,
    rho: float | None = None,
    beta: float | None = None,
    sample_eps: tuple[float, ...] = SAMPLE_EPS,
    fit_grid: tuple[float, ...] = FIT_CHECK_GRID,
    state_cap: int = DEFAULT_STATE_CAP,
) -> StructureReport:
    """Run every structural check; see the module docstring for the list.

    rho None means verified mode: the tolerance is computed from the
    payoff tables and interdependence becomes a hard precondition.
    """
    verified = rho is None
    resolved_rho = compute_rho(game) if rho is None else float(rho)
    if verified:
        inter = check_interdependence(game, resolved_rho)
        if not inter:
            raise VerificationError(
                "verified mode needs an interdependent game; independence "
                f"witness: {inter.witness}"
            )
        if c < game.n_agents:
            raise ConfigError(
                f"verified mode needs c of at least the agent count: "
                f"c={c}, n={game.n_agents}"
            )

    model = ChainModel.create(game, c, rho=rho, beta=beta)
    space = enumerate_states(model, cap=state_cap)
    graph = build_state_graph(space)
    prediction = predict_efficient_states(game, rho=resolved_rho)

    checks: dict[str, bool] = {}
    extras: dict[str, object] = {
        "n_states": len(space),
        "rho": resolved_rho,
        "sample_eps": list(sample_eps),
        "fit_grid": list(fit_grid),
    }

    # rows_stochastic
    row_errs = []
    try:
        for eps in sample_eps:
            tm = build_transition_matrix(space, eps)
            row_errs.append(tm.row_sum_error)
        checks["rows_stochastic"] = True
    except VerificationError as exc:
        checks["rows_stochastic"] = False
        extras["rows_stochastic_error"] = str(exc)
    extras["row_sum_errors"] = row_errs

    # irreducible: support digraph strongly connected
    support_adj = [[y for y, _ in row] for row in graph.edges]
    components = strongly_connected_components(support_adj)
    checks["irreducible"] = len(components) == 1
    extras["support_components"] = len(components)

    # aperiodic
    has_self_loop = any(
        any(y == x for y, _ in row) for x, row in enumerate(graph.edges)
    )
    if has_self_loop:
        checks["aperiodic"] = True
    else:
        g = 0
        for x, row in enumerate(graph.edges):
            for y, _ in row:
                for z, _ in graph.edges[y]:
                    if z == x:
                        g = math.gcd(g, 2)
                if y == x:
                    g = math.gcd(g, 1)
        checks["aperiodic"] = g == 1
    extras["self_loop"] = has_self_loop

    # entrywise limit + fit agreement on sampled edges
    sampled = _sample_edges(graph)
    limit_ok = True
    fit_ok = True
    fit_rows = []
    for x, y, power in sampled:
        sx, sy = space.states[x], space.states[y]
        r = unscale(power)
        if not _limit_certified(model, sx, sy, power):
            limit_ok = False
        fit = fit_resistance_numeric(
            model, sx, sy, eps_grid=_representable_grid(model, sx, sy, fit_grid)
        )
        gap = abs(fit.slope - r) if math.isfinite(fit.slope) else math.inf
        if fit.constant and power == 0:
            gap = 0.0
        if not math.isfinite(fit.slope) or gap > FIT_TOLERANCE:
            fit_ok = False
        fit_rows.append(
            {
                "src": x,
                "dst": y,
                "exact": r,
                "fitted": fit.slope,
                "r_squared": fit.r_squared,
            }
        )
    checks["entrywise_limit"] = limit_ok
    checks["fit_matches_analytic"] = fit_ok
    extras["sampled_fits"] = fit_rows

    # classification
    classification: RecurrenceClassification | None = None
    try:
        classification = classify_recurrence(space)
        checks["classification_clean"] = True
    except ClassificationError as exc:
        checks["classification_clean"] = False
        extras["classification_error"] = str(exc)

    resistances: ClassResistances | None = None
    potentials: Potentials | None = None
    if classification is None:
        for name in (
            "potential_formula",
            "efficiency_gap",
            "band_row1_d_to_c0",
            "band_row3_c0_to_d",
            "band_row4_cm_to_d",
            "band_row5_c0_pairs",
            "band_row67_level_pairs",
        ):
            checks[name] = False
    else:
        extras["class_counts"] = {
            "D_states": len(classification.d_states),
            "content": len(classification.content),
            "transient": len(classification.transient),
            "by_level": {
                str(m): len(ids) for m, ids in sorted(classification.by_level().items())
            },
        }
        resistances = class_resistances(
            graph, classification, require_connected=verified
        )
        potentials = stochastic_potentials(resistances)

        c_power = model.c_power
        content = classification.content
        n_content = len(content)

        # potential_formula: Eq-9-style equality for level-0 classes
        formula_ok = True
        formula_rows = []
        for k, cc in enumerate(content):
            expected = (n_content - 1) * c_power + sum(
                scale_exact(1.0 - a.utility) for a in cc.state
            )
            actual = potentials.gammas[k + 1]
            match = actual == expected
            formula_rows.append(
                {
                    "state": render_state(cc.state),
                    "level": cc.level,
                    "gamma": unscale(actual),
                    "formula": unscale(expected),
                    "match": match,
                }
            )
            if cc.level == 0 and not match:
                formula_ok = False
        checks["potential_formula"] = formula_ok
        extras["potential_rows"] = formula_rows

        # efficiency_gap: only level-0 classes may attain the minimum
        level0 = [k + 1 for k, cc in enumerate(content) if cc.level == 0]
        if level0:
            min_level0 = min(potentials.gammas[cid] for cid in level0)
            gap_ok = potentials.gammas[0] > min_level0 and all(
                potentials.gammas[k + 1] > min_level0
                for k, cc in enumerate(content)
                if cc.level >= 1
            )
        else:
            gap_ok = False
        checks["efficiency_gap"] = gap_ok

        # band checks
        row1 = True
        for k, cc in enumerate(content):
            if cc.level != 0:
                continue
            expected = sum(scale_exact(1.0 - a.utility) for a in cc.state)
            if resistances.free[0][k + 1] != expected:
                row1 = False
        checks["band_row1_d_to_c0"] = row1

        row3 = all(
            resistances.free[k + 1][0] == c_power
            for k, cc in enumerate(content)
            if cc.level == 0
        )
        row4 = all(
            resistances.free[k + 1][0] == c_power
            for k, cc in enumerate(content)
            if cc.level >= 1
        )
        checks["band_row3_c0_to_d"] = row3
        checks["band_row4_cm_to_d"] = row4

        row5 = True
        for i, ci in enumerate(content):
            if ci.level != 0:
                continue
            for j, cj in enumerate(content):
                if i == j or cj.level != 0:
                    continue
                r = resistances.free[i + 1][j + 1]
                if r is None or not c_power <= r <= 2 * c_power:
                    row5 = False
        checks["band_row5_c0_pairs"] = row5

        row67 = True
        for i, ci in enumerate(content):
            for j, cj in enumerate(content):
                if i == j or ci.level == cj.level:
                    continue
                r = resistances.direct[i + 1][j + 1]
                if r is None:
                    continue  # no route avoiding third classes: bounds vacuous
                lower = abs(cj.level - ci.level) * c_power
                upper = scale_exact(class_resistance_bound(cj.level, c))
                if not lower <= r <= upper:
                    row67 = False
        checks["band_row67_level_pairs"] = row67

        # row 2 composition: informational only; min over level-0 relays
        row2_rows = []
        for j, cj in enumerate(content):
            if cj.level == 0:
                continue
            best = None
            for k, ck in enumerate(content):
                if ck.level != 0:
                    continue
                a = resistances.free[0][k + 1]
                b = resistances.free[k + 1][j + 1]
                if a is not None and b is not None:
                    cand = a + b
                    if best is None or cand < best:
                        best = cand
            actual = resistances.free[0][j + 1]
            row2_rows.append(
                {
                    "state": render_state(cj.state),
                    "direct": None if actual is None else unscale(actual),
                    "composed": None if best is None else unscale(best),
                    "equal": actual == best,
                }
            )
        extras["row2_composition"] = row2_rows

        # efficiency prediction cross-check (reported, never fatal)
        stable = {space.states[v] for v in potentials.stable_states()}
        predicted = set(prediction.states)
        extras["stable_states"] = sorted(render_state(z) for z in stable)
        extras["predicted_states"] = sorted(render_state(z) for z in predicted)
        extras["efficiency_match"] = stable == predicted
        extras["gamma_by_class"] = {
            classification.label(cid)
            + "@"
            + (
                render_state(space.states[classification.members(cid)[0]])
                if cid > 0
                else "all-D"
            ): potentials.gamma_float(cid)
            for cid in range(classification.n_classes)
        }

    return StructureReport(
        verified=verified,
        c=c,
        rho=resolved_rho,
        beta=beta,
        checks=checks,
        extras=extras,
        space=space,
        classification=classification,
        resistances=resistances,
        potentials=potentials,
        prediction=prediction,
    )
