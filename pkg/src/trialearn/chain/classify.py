"""Recurrence-class structure of the unperturbed chain.

Recurrent states are the closed communicating classes of the
zero-resistance digraph (transitions feasible without any perturbation).
The supported shapes are:

  D    the single class of aligned all-Discontent states;
  C^0  singleton all-Content states whose every agent is aligned: its
       remembered payoff equals its payoff at the state's profile under
       some disturbance, and stays inside the tolerance band under all;
  C^m  singleton all-Content states where the set S of non-aligned agents
       carries state copied verbatim from some C^(m-1) singleton (the
       witness); m is the least level at which such a witness exists.

Any other recurrent structure raises ClassificationError: it would fall
outside the supported theory and almost always indicates a modelling bug.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import ClassificationError
from ..learner import CONTENT, SystemState, all_content, all_discontent, render_state
from .state_space import StateSpace


def zero_adjacency(space: StateSpace) -> list[list[int]]:
    """Successors along zero-resistance edges, per state index."""
    adj: list[list[int]] = []
    for x in space.states:
        outs = space.model.support_outcomes(x)
        adj.append(sorted(space.index[y] for y, p in outs.items() if p == 0))
    return adj


def strongly_connected_components(adj: list[list[int]]) -> list[list[int]]:
    """Iterative Tarjan; components in deterministic (root-order) form."""
    n = len(adj)
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    components: list[list[int]] = []
    counter = 0
    for start in range(n):
        if index[start] != -1:
            continue
        work = [(start, 0)]
        while work:
            v, pi = work[-1]
            if pi == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            advanced = False
            while pi < len(adj[v]):
                w = adj[v][pi]
                pi += 1
                if index[w] == -1:
                    work[-1] = (v, pi)
                    work.append((w, 0))
                    advanced = True
                    break
                if on_stack[w]:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                components.append(sorted(comp))
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
    return components


@dataclass(frozen=True)
class ContentClass:
    """One recurrent all-Content singleton."""

    state_index: int
    state: SystemState
    level: int  # the m in C^m
    aligned: frozenset[int]
    # partition[k] = agents aligned at depth k of the witness chain;
    # partition[level] are the agents aligned at the state's own profile.
    partition: tuple[frozenset[int], ...]
    witness: int | None  # content-class list position of the C^(m-1) parent


@dataclass
class RecurrenceClassification:
    space: StateSpace
    d_states: tuple[int, ...]
    content: tuple[ContentClass, ...]
    transient: tuple[int, ...]
    class_of_state: dict[int, int] = field(repr=False)

    @property
    def n_classes(self) -> int:
        # class id 0 is D; content class k has id k + 1
        return 1 + len(self.content)

    def members(self, class_id: int) -> tuple[int, ...]:
        if class_id == 0:
            return self.d_states
        return (self.content[class_id - 1].state_index,)

    def label(self, class_id: int) -> str:
        if class_id == 0:
            return "D"
        return f"C{self.content[class_id - 1].level}"

    def level_of(self, class_id: int) -> int | None:
        """The m of a content class; None for D."""
        if class_id == 0:
            return None
        return self.content[class_id - 1].level

    def by_level(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for k, cc in enumerate(self.content):
            out.setdefault(cc.level, []).append(k + 1)
        return out

    def recurrent_states(self) -> set[int]:
        out = set(self.d_states)
        out.update(cc.state_index for cc in self.content)
        return out


def aligned_agents(space: StateSpace, state: SystemState) -> frozenset[int]:
    """Agents whose remembered payoff equals a payoff of the state's own
    profile under some disturbance (exact table-value equality)."""
    game = space.model.game
    profile = tuple(a.action for a in state)
    joint = game.joint_index(profile)
    out = set()
    for i, zi in enumerate(state):
        for w in range(game.n_disturbances):
            if float(game.utilities[i, joint, w]) == zi.utility:
                out.add(i)
                break
    return frozenset(out)


def classify_recurrence(space: StateSpace) -> RecurrenceClassification:
    """Closed-communicating-class computation plus structural labelling."""
    adj = zero_adjacency(space)
    components = strongly_connected_components(adj)
    comp_of = [0] * len(adj)
    for ci, comp in enumerate(components):
        for v in comp:
            comp_of[v] = ci

    recurrent: list[list[int]] = []
    for ci, comp in enumerate(components):
        closed = all(comp_of[w] == ci for v in comp for w in adj[v])
        if closed:
            recurrent.append(comp)

    d_components = []
    content_states: list[int] = []
    for comp in recurrent:
        states = [space.states[v] for v in comp]
        if all(all_discontent(z) for z in states):
            d_components.append(comp)
            continue
        if len(comp) == 1 and all_content(states[0]):
            content_states.append(comp[0])
            continue
        sample = ", ".join(render_state(z) for z in states[:4])
        raise ClassificationError(
            f"recurrent class with {len(comp)} states is neither the "
            f"all-Discontent class nor an all-Content singleton: {sample}"
        )
    if len(d_components) != 1:
        raise ClassificationError(
            f"expected exactly one all-Discontent recurrence class, found "
            f"{len(d_components)}"
        )
    d_states = tuple(d_components[0])

    n = space.model.game.n_agents
    every = frozenset(range(n))
    aligned_of: dict[int, frozenset[int]] = {}
    for v in content_states:
        aligned = aligned_agents(space, space.states[v])
        if not aligned:
            raise ClassificationError(
                "recurrent all-Content state has no aligned agent at all: "
                f"{render_state(space.states[v])}"
            )
        aligned_of[v] = aligned

    # least-level assignment with witness chains
    level_of: dict[int, int] = {}
    witness_of: dict[int, int | None] = {}
    pending = set(content_states)
    for v in content_states:
        if aligned_of[v] == every:
            level_of[v] = 0
            witness_of[v] = None
            pending.discard(v)
    level = 0
    while pending:
        if level >= n - 1:
            bad = ", ".join(render_state(space.states[v]) for v in sorted(pending)[:4])
            raise ClassificationError(
                f"content singletons admit no witness chain below level n={n}: {bad}"
            )
        this_level = [v for v, m in level_of.items() if m == level]
        level += 1
        newly = []
        for v in sorted(pending):
            z = space.states[v]
            stale = every - aligned_of[v]
            for u in this_level:
                zu = space.states[u]
                if all(zu[j] == z[j] for j in stale):
                    level_of[v] = level
                    witness_of[v] = u
                    newly.append(v)
                    break
        if not newly:
            bad = ", ".join(render_state(space.states[v]) for v in sorted(pending)[:4])
            raise ClassificationError(
                f"no witness in level {level - 1} classes for recurrent content "
                f"singletons: {bad}"
            )
        pending.difference_update(newly)

    content_sorted = sorted(content_states)
    list_pos = {v: k for k, v in enumerate(content_sorted)}
    content: list[ContentClass] = []
    partitions: dict[int, tuple[frozenset[int], ...]] = {}

    def build_partition(v: int) -> tuple[frozenset[int], ...]:
        if v in partitions:
            return partitions[v]
        if level_of[v] == 0:
            part: tuple[frozenset[int], ...] = (every,)
        else:
            u = witness_of[v]
            assert u is not None
            stale = every - aligned_of[v]
            upper = build_partition(u)
            part = tuple(block & stale for block in upper) + (aligned_of[v],)
        partitions[v] = part
        return part

    for v in content_sorted:
        part = build_partition(v)
        content.append(
            ContentClass(
                state_index=v,
                state=space.states[v],
                level=level_of[v],
                aligned=aligned_of[v],
                partition=part,
                witness=None if witness_of[v] is None else list_pos[witness_of[v]],
            )
        )

    recurrent_set = set(d_states) | set(content_states)
    transient = tuple(v for v in range(len(space.states)) if v not in recurrent_set)
    class_of_state = {v: 0 for v in d_states}
    for k, cc in enumerate(content):
        class_of_state[cc.state_index] = k + 1
    return RecurrenceClassification(
        space=space,
        d_states=d_states,
        content=tuple(content),
        transient=transient,
        class_of_state=class_of_state,
    )
