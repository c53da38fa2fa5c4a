"""Shared fixtures: packaged scenarios, chain pipelines, random suites."""

from __future__ import annotations

import importlib.resources

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from trialearn import Game, load_game, random_game, RandomGameSpec
from trialearn.chain import (
    ChainModel,
    build_state_graph,
    class_resistances,
    classify_recurrence,
    enumerate_states,
    predict_efficient_states,
    stochastic_potentials,
    verify_structure,
)
from trialearn.traffic import MeteringGains, build_traffic_game, calibrate, load_demands, load_freeway

settings.register_profile(
    "suite",
    derandomize=True,
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("suite")

# (number, name, passed, detail) rows reported by the acceptance module
ACCEPTANCE_LINES: list[tuple[int, str, bool, str]] = []


def record_criterion(number: int, name: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append((number, name, passed, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for number, name, ok, detail in sorted(ACCEPTANCE_LINES):
        verdict = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {number:02d} {verdict} [{name}] {detail}")


def data_file(name: str):
    return importlib.resources.files("trialearn.data").joinpath(name)


def make_game(utilities, probs=None, action_names=None) -> Game:
    """Hand-built game from a (n, P, W) utility array."""
    u = np.asarray(utilities, dtype=np.float64)
    n, n_profiles, n_w = u.shape
    counts = _infer_counts(n, n_profiles) if action_names is None else [
        len(a) for a in action_names
    ]
    actions = (
        tuple(tuple(str(a) for a in acts) for acts in action_names)
        if action_names is not None
        else tuple(tuple(str(k) for k in range(c)) for c in counts)
    )
    if probs is None:
        probs = tuple(1.0 / n_w for _ in range(n_w))
    return Game(
        agents=tuple(f"agent{i + 1}" for i in range(n)),
        actions=actions,
        disturbances=tuple(str(w) for w in range(n_w)),
        disturbance_probs=tuple(probs),
        utilities=u,
    )


def _infer_counts(n: int, n_profiles: int) -> list[int]:
    # even split first, else a factorization fallback for 2-agent tables
    root = round(n_profiles ** (1.0 / n))
    if root**n == n_profiles:
        return [root] * n
    if n == 2:
        for a in range(2, n_profiles + 1):
            if n_profiles % a == 0:
                return [a, n_profiles // a]
    raise ValueError(f"cannot infer action counts for {n} agents, {n_profiles} profiles")


def chain_pipeline(game: Game, c: float) -> dict:
    """Exact analysis chain without the numeric verification battery."""
    model = ChainModel.create(game, c=c)
    space = enumerate_states(model)
    graph = build_state_graph(space)
    classification = classify_recurrence(space)
    resistances = class_resistances(graph, classification)
    potentials = stochastic_potentials(resistances)
    prediction = predict_efficient_states(game, rho=None)
    stable = frozenset(space.states[i] for i in potentials.stable_states())
    return {
        "game": game,
        "model": model,
        "space": space,
        "graph": graph,
        "classification": classification,
        "resistances": resistances,
        "potentials": potentials,
        "prediction": prediction,
        "stable": stable,
    }


@pytest.fixture(scope="session")
def example1() -> Game:
    with data_file("example1.json").open("r", encoding="utf-8") as fh:
        return load_game(fh)


@pytest.fixture(scope="session")
def ex1_chain(example1) -> dict:
    return chain_pipeline(example1, c=2.0)


@pytest.fixture(scope="session")
def ex1_report(example1):
    return verify_structure(example1, c=2.0)


# shape, disturbance count, seeds: a hundred games total
RANDOM_SUITE_PLAN = (
    ((2, 2), 1, range(9)),
    ((2, 2), 2, range(9)),
    ((2, 3), 1, range(9)),
    ((2, 3), 2, range(9)),
    ((3, 2), 1, range(9)),
    ((3, 2), 2, range(9)),
    ((3, 3), 1, range(9)),
    ((3, 3), 2, range(9)),
    ((2, 2, 2), 1, range(6)),
    ((3, 2, 2), 1, range(6)),
    ((2, 3, 2), 1, range(6)),
    ((2, 2, 3), 1, range(6)),
    ((2, 2, 2), 2, range(4)),
)


@pytest.fixture(scope="session")
def random_suite() -> list[dict]:
    out = []
    for shape, n_w, seeds in RANDOM_SUITE_PLAN:
        for seed in seeds:
            game = random_game(
                RandomGameSpec(action_counts=shape, n_disturbances=n_w), seed=seed
            )
            entry = chain_pipeline(game, c=float(len(shape)) + 1.0)
            entry.update(shape=shape, n_w=n_w, seed=seed)
            out.append(entry)
    return out


VERIFIED_SUITE_PLAN = (
    ((2, 2), 2, range(100, 105)),
    ((2, 3), 2, range(100, 105)),
    ((3, 2), 2, range(100, 105)),
    ((3, 3), 2, range(100, 103)),
    ((2, 2, 2), 1, range(100, 104)),
    ((3, 2, 2), 1, range(100, 103)),
)


@pytest.fixture(scope="session")
def verified_suite() -> list[dict]:
    out = []
    for shape, n_w, seeds in VERIFIED_SUITE_PLAN:
        for seed in seeds:
            game = random_game(
                RandomGameSpec(action_counts=shape, n_disturbances=n_w), seed=seed
            )
            report = verify_structure(game, c=float(len(shape)) + 1.0)
            out.append({"game": game, "report": report, "shape": shape, "n_w": n_w, "seed": seed})
    return out


@pytest.fixture(scope="session")
def freeway3():
    return load_freeway(str(data_file("freeway03.json")))


@pytest.fixture(scope="session")
def demands3():
    return load_demands(str(data_file("demands03.json")))


@pytest.fixture(scope="session")
def freeway10():
    return load_freeway(str(data_file("freeway10.json")))


@pytest.fixture(scope="session")
def demands10():
    return load_demands(str(data_file("demands10.json")))


@pytest.fixture(scope="session")
def traffic3(freeway3, demands3) -> dict:
    gains = MeteringGains()
    calibration = calibrate(freeway3, demands3, gains)
    game = build_traffic_game(freeway3, demands3, gains=gains, calibration=calibration)
    return {
        "spec": freeway3,
        "demands": demands3,
        "gains": gains,
        "calibration": calibration,
        "game": game,
    }


@pytest.fixture(scope="session")
def traffic10(freeway10, demands10) -> dict:
    gains = MeteringGains()
    calibration = calibrate(freeway10, demands10, gains)
    game = build_traffic_game(freeway10, demands10, gains=gains, calibration=calibration)
    return {
        "spec": freeway10,
        "demands": demands10,
        "gains": gains,
        "calibration": calibration,
        "game": game,
    }
