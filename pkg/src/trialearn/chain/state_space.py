"""Reachable state enumeration.

The chain's state space is the closure of the aligned all-Discontent states
under one-step transitions that have positive probability for any
eps in (0, 1).  The learner's very first iteration lands in an aligned
all-Discontent state exactly when every mood coin fails, and every other
first-step outcome is reachable from those states at zero resistance, so
this closure is the long-run state space of the process.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

from ..errors import VerificationError
from ..learner import SystemState
from .model import ChainModel

DEFAULT_STATE_CAP = 10**6


@dataclass
class StateSpace:
    model: ChainModel
    states: tuple[SystemState, ...]
    index: dict[SystemState, int] = field(repr=False)

    def __len__(self) -> int:
        return len(self.states)

    def __iter__(self) -> Iterator[SystemState]:
        return iter(self.states)

    def __contains__(self, state: SystemState) -> bool:
        return state in self.index


def enumerate_states(model: ChainModel, cap: int = DEFAULT_STATE_CAP) -> StateSpace:
    """BFS closure of the aligned all-Discontent states.

    Deterministic: seeds are sorted, successors explored in sorted order,
    indices are discovery order.  Raises when the closure exceeds `cap`.
    """
    seeds = model.aligned_discontent_states()
    index: dict[SystemState, int] = {}
    order: list[SystemState] = []
    frontier: list[SystemState] = []
    for z in seeds:
        if z not in index:
            index[z] = len(order)
            order.append(z)
            frontier.append(z)
    while frontier:
        state = frontier.pop(0)
        successors = model.support_outcomes(state)
        for y in sorted(successors):
            if y not in index:
                if len(order) >= cap:
                    raise VerificationError(
                        f"state space exceeds the cap of {cap} states; raise the "
                        "cap explicitly if the instance is really this large"
                    )
                index[y] = len(order)
                order.append(y)
                frontier.append(y)
    return StateSpace(model=model, states=tuple(order), index=index)
