"""Spanning in-trees over recurrence classes and stochastic potentials.

The potential of a recurrence class is the minimum total resistance of a
spanning in-tree on the class digraph rooted at that class (every other
class keeps exactly one outgoing edge and all paths lead to the root).
Classes of minimum potential form the stochastically stable set: exactly
the states keeping probability mass as the perturbation vanishes.

Weights are exact scaled integers throughout; ties never depend on float
rounding. The tree search is Chu-Liu/Edmonds run on the reversed graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import VerificationError
from .classify import RecurrenceClassification
from .model import unscale
from .resistance import ClassResistances

_Edge = tuple[int, int, int, int]  # u, v, weight, original edge id


def _min_in_edges(
    nodes: list[int], edges: list[_Edge], root: int
) -> dict[int, _Edge] | None:
    chosen: dict[int, _Edge] = {}
    for e in edges:
        v = e[1]
        if v == root or e[0] == v:
            continue
        cur = chosen.get(v)
        if cur is None or (e[2], e[0]) < (cur[2], cur[0]):
            chosen[v] = e
    for v in nodes:
        if v != root and v not in chosen:
            return None
    return chosen


def _find_cycle(chosen: dict[int, _Edge], root: int) -> list[int] | None:
    color: dict[int, int] = {}
    for start in chosen:
        if color.get(start):
            continue
        path = []
        v = start
        while v != root and color.get(v) is None:
            color[v] = 1
            path.append(v)
            v = chosen[v][0]
        if v != root and color.get(v) == 1:
            return path[path.index(v):]
        for u in path:
            color[u] = 2
    return None


def _edmonds(nodes: list[int], edges: list[_Edge], root: int) -> list[int] | None:
    """Minimum out-arborescence rooted at root; returns original edge ids."""
    chosen = _min_in_edges(nodes, edges, root)
    if chosen is None:
        return None
    cycle = _find_cycle(chosen, root)
    if cycle is None:
        return [e[3] for e in chosen.values()]
    in_cycle = set(cycle)
    super_node = max(nodes) + 1
    # keep only the cheapest contracted edge per (nu, nv); parallel edges
    # cannot appear in a minimum tree and bloat deep contractions
    best_map: dict[tuple[int, int], tuple[int, _Edge]] = {}
    for e in edges:
        u, v, w, _ = e
        nu = super_node if u in in_cycle else u
        nv = super_node if v in in_cycle else v
        if nu == nv:
            continue
        nw = w - chosen[v][2] if nv == super_node else w
        cur = best_map.get((nu, nv))
        if cur is None or (nw, e[0], e[1]) < (cur[0], cur[1][0], cur[1][1]):
            best_map[(nu, nv)] = (nw, e)
    carried: dict[int, _Edge] = {}  # contracted edge id -> original edge
    new_edges: list[_Edge] = []
    # best_map iterates in first-seen edge order, which is deterministic
    for (nu, nv), (nw, e) in best_map.items():
        eid = len(new_edges)
        carried[eid] = e
        new_edges.append((nu, nv, nw, eid))
    new_nodes = [v for v in nodes if v not in in_cycle] + [super_node]
    sub = _edmonds(new_nodes, new_edges, root)
    if sub is None:
        return None
    result: list[int] = []
    entering: _Edge | None = None
    for cid in sub:
        orig = carried[cid]
        if orig[1] in in_cycle:
            entering = orig
        result.append(orig[3])
    if entering is None:
        return None
    for v in cycle:
        if v != entering[1]:
            result.append(chosen[v][3])
    return result


@dataclass(frozen=True)
class Arborescence:
    """One minimum spanning in-tree: per non-root class its out-edge."""

    root: int
    edges: tuple[tuple[int, int], ...]  # (class, class it points to)
    total: int

    @property
    def total_float(self) -> float:
        return unscale(self.total)


def minimum_in_tree(
    n_classes: int, weights: dict[tuple[int, int], int], root: int
) -> Arborescence:
    """Cheapest spanning in-tree to root on the weighted class digraph."""
    nodes = list(range(n_classes))
    edges: list[_Edge] = []
    originals: list[tuple[int, int]] = []
    for (i, j), w in sorted(weights.items()):
        if i == j:
            continue
        # in-tree edge i -> j becomes reversed-graph in-edge of i
        eid = len(originals)
        originals.append((i, j))
        edges.append((j, i, w, eid))
    ids = _edmonds(nodes, edges, root)
    if ids is None:
        raise VerificationError(
            f"no spanning in-tree reaches class {root}; class digraph incomplete"
        )
    picked = tuple(sorted(originals[eid] for eid in ids))
    total = sum(weights[e] for e in picked)
    return Arborescence(root=root, edges=picked, total=total)


@dataclass(frozen=True)
class Potentials:
    """Stochastic potential of every recurrence class."""

    classification: RecurrenceClassification
    gammas: tuple[int, ...]
    trees: tuple[Arborescence, ...]

    def gamma_float(self, class_id: int) -> float:
        return unscale(self.gammas[class_id])

    @property
    def stable_classes(self) -> tuple[int, ...]:
        lowest = min(self.gammas)
        return tuple(c for c, g in enumerate(self.gammas) if g == lowest)

    def stable_states(self) -> tuple[int, ...]:
        out: list[int] = []
        for c in self.stable_classes:
            out.extend(self.classification.members(c))
        return tuple(sorted(out))


def stochastic_potentials(res: ClassResistances) -> Potentials:
    cls = res.classification
    n = cls.n_classes
    if n == 1:
        only = Arborescence(root=0, edges=(), total=0)
        return Potentials(classification=cls, gammas=(0,), trees=(only,))
    weights: dict[tuple[int, int], int] = {}
    for i in range(n):
        for j in range(n):
            if i != j and res.free[i][j] is not None:
                weights[(i, j)] = res.free[i][j]
    trees = tuple(minimum_in_tree(n, weights, r) for r in range(n))
    gammas = tuple(t.total for t in trees)
    return Potentials(classification=cls, gammas=gammas, trees=trees)


def potential_table(potentials: Potentials) -> list[dict[str, object]]:
    """Per-class summary rows, floats for display only."""
    cls = potentials.classification
    rows = []
    for c in range(cls.n_classes):
        rows.append(
            {
                "class": cls.label(c),
                "members": len(cls.members(c)),
                "gamma": potentials.gamma_float(c),
                "stable": c in potentials.stable_classes,
            }
        )
    return rows


def is_finite_gamma(value: float) -> bool:
    return math.isfinite(value)
