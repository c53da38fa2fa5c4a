"""Serializable views of a chain analysis.

analysis_report flattens a StructureReport into plain JSON types:
state-space size, class inventory, inter-class resistance edges in both
variants, per-class potentials, the stable set, the check table, and the
welfare-prediction verdict. resistance_edge_lines renders the state
graph one edge per line (src-id, dst-id, resistance) for graph tooling.
"""

from __future__ import annotations

from typing import Iterator

from ..learner import render_state
from .model import unscale
from .resistance import StateGraph
from .verify import StructureReport


def _class_entry(report: StructureReport, class_id: int) -> dict[str, object]:
    cls = report.classification
    assert cls is not None
    members = [
        {
            "index": v,
            "state": render_state(report.space.states[v]),
        }
        for v in cls.members(class_id)
    ]
    entry: dict[str, object] = {
        "id": class_id,
        "label": cls.label(class_id),
        "members": members,
    }
    level = cls.level_of(class_id)
    if level is not None:
        cc = cls.content[class_id - 1]
        entry["level"] = level
        entry["aligned_agents"] = sorted(cc.aligned)
        entry["partition"] = [sorted(block) for block in cc.partition]
        if cc.witness is not None:
            entry["witness_class"] = cc.witness + 1
    if report.potentials is not None:
        entry["gamma"] = report.potentials.gamma_float(class_id)
        entry["stable"] = class_id in report.potentials.stable_classes
    return entry


def _resistance_edges(report: StructureReport) -> list[dict[str, object]]:
    cls = report.classification
    res = report.resistances
    assert cls is not None and res is not None
    edges = []
    for i in range(cls.n_classes):
        for j in range(cls.n_classes):
            if i == j:
                continue
            free = res.free[i][j]
            direct = res.direct[i][j]
            edges.append(
                {
                    "src": i,
                    "dst": j,
                    "free": None if free is None else unscale(free),
                    "direct": None if direct is None else unscale(direct),
                }
            )
    return edges


def analysis_report(report: StructureReport) -> dict[str, object]:
    """JSON-ready dictionary describing the whole analysis."""
    out: dict[str, object] = {
        "verified_mode": report.verified,
        "c": report.c,
        "rho": report.rho,
        "beta": report.beta,
        "n_states": len(report.space),
        "checks": dict(report.checks),
        "passed": report.passed,
    }
    if report.classification is not None:
        cls = report.classification
        out["classes"] = [_class_entry(report, cid) for cid in range(cls.n_classes)]
        out["n_transient"] = len(cls.transient)
    if report.resistances is not None:
        out["class_resistances"] = _resistance_edges(report)
    if report.potentials is not None:
        pot = report.potentials
        out["stable_classes"] = list(pot.stable_classes)
        out["stable_states"] = [
            render_state(report.space.states[v]) for v in pot.stable_states()
        ]
    out["prediction"] = {
        "max_welfare": report.prediction.max_welfare,
        "states": [render_state(z) for z in report.prediction.states],
        "interdependent": report.prediction.preconditions_hold,
        "matches_stable_set": report.extras.get("efficiency_match"),
    }
    # keep only JSON-clean extras
    for key in (
        "row_sum_errors",
        "sampled_fits",
        "class_counts",
        "potential_rows",
        "row2_composition",
        "gamma_by_class",
        "classification_error",
    ):
        if key in report.extras:
            out[key] = report.extras[key]
    return out


def resistance_edge_lines(graph: StateGraph) -> Iterator[str]:
    """One support edge per line: src-id, dst-id, resistance."""
    for x, row in enumerate(graph.edges):
        for y, p in row:
            yield f"{x},{y},{unscale(p):.17g}"
