"""Closed-form predictions about the long-run behaviour of the learner.

Under strong payoff interdependence the theory predicts that vanishing
perturbation concentrates all mass on content states assembled from the
welfare-maximizing action profiles: baseline actions at an argmax of
total payoff, remembered payoffs taken at the same disturbance. The
toolkit computes that predicted set directly from the payoff tables so
it can be checked against the exact tree computation.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from ..games import (
    Game,
    InterdependenceReport,
    check_interdependence,
    compute_rho,
    welfare_argmax,
)
from ..learner import CONTENT, AgentState, SystemState


@dataclass(frozen=True)
class EfficiencyPrediction:
    """Predicted stochastically stable states and their preconditions."""

    max_welfare: float
    pairs: tuple[tuple[tuple[int, ...], int], ...]  # (profile, disturbance)
    states: tuple[SystemState, ...]
    interdependence: InterdependenceReport

    @property
    def preconditions_hold(self) -> bool:
        return bool(self.interdependence)


def predict_efficient_states(game: Game, rho: float | None = None) -> EfficiencyPrediction:
    """Welfare-argmax content states plus the interdependence check."""
    report = welfare_argmax(game)
    seen: set[SystemState] = set()
    states: list[SystemState] = []
    for profile, w in report.argmax:
        joint = game.joint_index(profile)
        z = tuple(
            AgentState(profile[i], float(game.utilities[i, joint, w]), CONTENT)
            for i in range(game.n_agents)
        )
        if z not in seen:
            seen.add(z)
            states.append(z)
    inter = check_interdependence(game, compute_rho(game) if rho is None else rho)
    return EfficiencyPrediction(
        max_welfare=report.max_value,
        pairs=report.argmax,
        states=tuple(states),
        interdependence=inter,
    )


def class_resistance_bound(level: int, c: float) -> float:
    """Upper bound on the escape resistance of a level-m content class.

    Quadratic in the level; the level-0 expression is taken as 2c so the
    bound stays monotone at the bottom of the hierarchy.
    """
    if level < 0:
        raise ValueError(f"level must be non-negative, got {level}")
    if level == 0:
        return 2.0 * c
    m = Fraction(level)
    bound = m * Fraction(c) ** 2 + (4 + m - m * m) / 2 * Fraction(c) - m * (m + 1) / 2
    return float(bound)
