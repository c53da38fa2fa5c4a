"""The repeated-game learner.

Each agent carries an internal state [baseline action, baseline utility,
mood].  Per iteration: a disturbance is sampled; every agent picks an action
(Content: baseline with probability 1 - eps^c, any particular other action
with probability eps^c / (|A_i| - 1); Discontent: uniform); payoffs are read
from the game table; every agent updates its state (a Content agent
replaying its baseline keeps its state when the payoff moved by at most rho,
every other case re-evaluates: new baseline = played action and payoff, mood
Content with probability eps^(1 - payoff)); optionally all agents then pass
their moods through the broadcast step (in a mixed mood vector, each locally
Content agent stays Content with probability eps^beta).

Agents are completely uncoupled: an agent's update reads only its own action
and payoff (plus the mood vector when broadcasting is on).

`run` drives the compiled kernel and is deterministic per seed; the
module-level operations (`select_action`, `update_agent_state`,
`broadcast_moods`, `step`) form a pure-Python reference implementation with
a pluggable random source that reproduces the kernel stream exactly when
given `SplitMix64(seed)`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import IO, Iterator, NamedTuple, Protocol, Sequence

import numpy as np

from . import _kernels
from .errors import ConfigError
from .games import INTERVAL_SLACK, Game, compute_rho

CONTENT = _kernels.CONTENT
DISCONTENT = _kernels.DISCONTENT

EPSILON_FLOOR = 1e-12

MOOD_CHARS = {CONTENT: "C", DISCONTENT: "D"}


class AgentState(NamedTuple):
    action: int
    utility: float
    mood: int

    def render(self) -> str:
        return f"[{self.action},{self.utility!r},{MOOD_CHARS[self.mood]}]"


SystemState = tuple[AgentState, ...]


def render_state(state: SystemState) -> str:
    return "{" + ",".join(a.render() for a in state) + "}"


def all_content(state: SystemState) -> bool:
    return all(a.mood == CONTENT for a in state)


def all_discontent(state: SystemState) -> bool:
    return all(a.mood == DISCONTENT for a in state)


class RandomSource(Protocol):
    def uniform(self) -> float:
        """Next uniform draw in [0, 1)."""


class SplitMix64:
    """Reference generator matching the kernel stream bit for bit."""

    __slots__ = ("_state",)

    MASK = (1 << 64) - 1
    GOLDEN = 0x9E3779B97F4A7C15
    MIX1 = 0xBF58476D1CE4E5B9
    MIX2 = 0x94D049BB133111EB

    def __init__(self, seed: int) -> None:
        self._state = seed & self.MASK

    def uniform(self) -> float:
        self._state = (self._state + self.GOLDEN) & self.MASK
        x = self._state
        x = ((x ^ (x >> 30)) * self.MIX1) & self.MASK
        x = ((x ^ (x >> 27)) * self.MIX2) & self.MASK
        x = x ^ (x >> 31)
        return (x >> 11) * 2.0**-53


class SequenceSource:
    """Deterministic test stub replaying a fixed list of draws."""

    def __init__(self, values: Sequence[float], cycle: bool = False) -> None:
        self._values = list(values)
        self._pos = 0
        self._cycle = cycle

    def uniform(self) -> float:
        if self._pos >= len(self._values):
            if not self._cycle:
                raise IndexError("SequenceSource exhausted")
            self._pos = 0
        v = self._values[self._pos]
        self._pos += 1
        return v


@dataclass(frozen=True)
class LearnerConfig:
    """Run parameters; `rho=None` means compute it from the game."""

    epsilon_initial: float
    c: float
    iterations: int
    seed: int
    epsilon_decay: float = 1.0
    rho: float | None = None
    beta: float | None = None
    epsilon_floor: float = EPSILON_FLOOR

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon_initial < 1.0:
            raise ConfigError(f"epsilon_initial must be in (0,1), got {self.epsilon_initial!r}")
        if not 0.0 < self.epsilon_decay <= 1.0:
            raise ConfigError(f"epsilon_decay must be in (0,1], got {self.epsilon_decay!r}")
        if self.c <= 0:
            raise ConfigError(f"c must be positive, got {self.c!r}")
        if self.iterations < 0:
            raise ConfigError(f"iterations must be nonnegative, got {self.iterations!r}")
        if self.rho is not None and self.rho < 0:
            raise ConfigError(f"rho must be nonnegative, got {self.rho!r}")
        if self.beta is not None and self.beta < 0:
            raise ConfigError(f"beta must be nonnegative, got {self.beta!r}")
        if not 0.0 < self.epsilon_floor < 1.0:
            raise ConfigError(f"epsilon_floor must be in (0,1), got {self.epsilon_floor!r}")

    @property
    def verified(self) -> bool:
        """True when rho comes from the game itself (guarantees intact)."""
        return self.rho is None

    def resolve_rho(self, game: Game) -> float:
        return compute_rho(game) if self.rho is None else self.rho

    def validate_for(self, game: Game) -> list[str]:
        """Check game-dependent constraints.

        The stability analysis assumes c > n.  Both reference scenarios sit
        exactly at c = n, so the boundary case is accepted with a warning;
        c < n is an error in verified mode and a warning with a rho
        override (the guarantees are already waived there).
        """
        warnings = []
        if self.c < game.n_agents:
            msg = (
                f"c must exceed the number of agents: c={self.c!r}, "
                f"n={game.n_agents}"
            )
            if self.verified:
                raise ConfigError(msg)
            warnings.append(msg + " (allowed: unverified mode)")
        elif self.c == game.n_agents:
            warnings.append(
                f"c={self.c!r} equals the number of agents; the stability "
                "guarantees assume c > n"
            )
        return warnings


@dataclass(frozen=True)
class IterationRecord:
    k: int
    epsilon: float
    disturbance: int
    profile: tuple[int, ...]
    payoffs: tuple[float, ...]
    state: SystemState


@dataclass
class Trajectory:
    """Result of a run: per-iteration post-update states plus aggregates."""

    game: Game
    config: LearnerConfig
    rho: float
    states: np.ndarray  # (iterations, 3n) int16 triples per agent
    disturbances: np.ndarray  # (iterations,) int16
    value_tables: tuple[np.ndarray, ...]  # per-agent sorted unique payoffs
    welfare_sum: float
    final_epsilon: float
    warnings: tuple[str, ...] = ()
    _hist_cache: list | None = field(default=None, repr=False)

    @property
    def iterations(self) -> int:
        return int(self.states.shape[0])

    @property
    def average_welfare(self) -> float:
        if self.iterations == 0:
            return 0.0
        return self.welfare_sum / self.iterations

    def state_at(self, k: int) -> SystemState:
        return self._decode(self.states[k])

    def _decode(self, row: np.ndarray) -> SystemState:
        n = self.game.n_agents
        return tuple(
            AgentState(
                action=int(row[3 * i]),
                utility=float(self.value_tables[i][int(row[3 * i + 1])]),
                mood=int(row[3 * i + 2]),
            )
            for i in range(n)
        )

    def histogram(self) -> list[tuple[SystemState, int, float]]:
        """Distinct visited states with counts, by descending occupancy.

        Ties are broken by the lexicographic encoding of the state so the
        order is deterministic.
        """
        if self._hist_cache is None:
            if self.iterations == 0:
                self._hist_cache = []
            else:
                rows, counts = np.unique(self.states, axis=0, return_counts=True)
                order = np.lexsort((np.arange(len(counts)), -counts))
                total = float(self.states.shape[0])
                self._hist_cache = [
                    (self._decode(rows[j]), int(counts[j]), counts[j] / total)
                    for j in order
                ]
        return self._hist_cache

    def states_visited(self) -> set[SystemState]:
        return {s for s, _, _ in self.histogram()}

    def modal_state(self) -> tuple[SystemState, float] | None:
        hist = self.histogram()
        if not hist:
            return None
        state, _, fraction = hist[0]
        return state, fraction

    def records(self) -> Iterator[IterationRecord]:
        """Reconstruct full per-iteration records from the trace."""
        eps = self.config.epsilon_initial
        n = self.game.n_agents
        for k in range(self.iterations):
            if k > 0:
                eps = max(eps * self.config.epsilon_decay, self.config.epsilon_floor)
            row = self.states[k]
            # The played profile always equals the post-update baseline
            # profile (both update branches leave them equal).
            profile = tuple(int(row[3 * i]) for i in range(n))
            w = int(self.disturbances[k])
            payoffs = tuple(float(v) for v in self.game.payoffs(profile, w))
            yield IterationRecord(
                k=k,
                epsilon=eps,
                disturbance=w,
                profile=profile,
                payoffs=payoffs,
                state=self._decode(row),
            )

    def state_id(self, state: SystemState) -> str:
        parts = []
        for i, a in enumerate(state):
            uidx = int(np.searchsorted(self.value_tables[i], a.utility))
            parts.append(f"{a.action}.{uidx}.{a.mood}")
        return "-".join(parts)

    def to_histogram_csv(self, fh: IO[str], threshold: float = 0.0001) -> None:
        """Histogram rows with fraction >= threshold, CSV with %.17g floats."""
        fh.write("state_id,state,count,fraction\n")
        for state, count, fraction in self.histogram():
            if fraction < threshold:
                continue
            fh.write(
                f'{self.state_id(state)},"{render_state(state)}",{count},{fraction:.17g}\n'
            )

    def summary_dict(self) -> dict:
        modal = self.modal_state()
        return {
            "iterations": self.iterations,
            "average_welfare": self.average_welfare,
            "final_epsilon": self.final_epsilon,
            "distinct_states": len(self.histogram()),
            "modal_state": render_state(modal[0]) if modal else None,
            "modal_fraction": modal[1] if modal else None,
            "rho": self.rho,
            "verified_rho": self.config.verified,
            "warnings": list(self.warnings),
        }


# -- pure reference operations ----------------------------------------


def select_action(
    agent_state: AgentState, action_count: int, eps: float, c: float, rng: RandomSource
) -> int:
    """One action draw per the mood rule; see the module docstring."""
    if action_count < 1:
        raise ConfigError("action_count must be at least 1")
    if agent_state.mood == CONTENT:
        r1 = rng.uniform()
        if action_count == 1:
            return agent_state.action
        if r1 < eps**c:
            r2 = rng.uniform()
            other = min(int(r2 * (action_count - 1)), action_count - 2)
            if other >= agent_state.action:
                other += 1
            return other
        return agent_state.action
    r = rng.uniform()
    return min(int(r * action_count), action_count - 1)


def update_agent_state(
    agent_state: AgentState,
    played: int,
    received_u: float,
    rho: float,
    eps: float,
    rng: RandomSource,
) -> AgentState:
    """Interval rule: keep, or re-evaluate with the eps^(1-u) mood coin."""
    if (
        agent_state.mood == CONTENT
        and played == agent_state.action
        and abs(received_u - agent_state.utility) <= rho + INTERVAL_SLACK
    ):
        return agent_state
    rc = rng.uniform()
    mood = CONTENT if rc < eps ** (1.0 - received_u) else DISCONTENT
    return AgentState(action=played, utility=received_u, mood=mood)


def broadcast_moods(
    moods: Sequence[int], eps: float, beta: float, rng: RandomSource
) -> tuple[int, ...]:
    """Mood exchange: unanimity is kept, mixed vectors degrade Content."""
    if all(m == CONTENT for m in moods) or all(m == DISCONTENT for m in moods):
        return tuple(moods)
    p_keep = eps**beta
    out = []
    for m in moods:
        if m == CONTENT:
            out.append(CONTENT if rng.uniform() < p_keep else DISCONTENT)
        else:
            out.append(DISCONTENT)
    return tuple(out)


def step(
    game: Game,
    state: SystemState,
    eps: float,
    c: float,
    rho: float,
    rng: RandomSource,
    beta: float | None = None,
) -> tuple[SystemState, int, tuple[int, ...], tuple[float, ...]]:
    """One synchronous round; returns (new state, w, profile, payoffs)."""
    r = rng.uniform()
    cum = 0.0
    w = game.n_disturbances - 1
    for j, p in enumerate(game.disturbance_probs):
        cum += p
        if r < cum:
            w = j
            break

    profile = tuple(
        select_action(state[i], game.action_counts[i], eps, c, rng)
        for i in range(game.n_agents)
    )
    payoffs = tuple(float(v) for v in game.payoffs(profile, w))
    new_states = [
        update_agent_state(state[i], profile[i], payoffs[i], rho, eps, rng)
        for i in range(game.n_agents)
    ]
    if beta is not None:
        moods = broadcast_moods([a.mood for a in new_states], eps, beta, rng)
        new_states = [a._replace(mood=m) for a, m in zip(new_states, moods)]
    return tuple(new_states), w, profile, payoffs


def initial_state(game: Game) -> SystemState:
    """All-Discontent start; baselines are placeholders until the first play."""
    return tuple(
        AgentState(action=0, utility=float(game.utility_values(i)[0]), mood=DISCONTENT)
        for i in range(game.n_agents)
    )


def _value_tables(game: Game) -> tuple[np.ndarray, ...]:
    return tuple(game.utility_values(i) for i in range(game.n_agents))


def _uidx_table(game: Game, tables: tuple[np.ndarray, ...]) -> np.ndarray:
    n = game.n_agents
    uidx = np.empty((n, game.n_profiles, game.n_disturbances), dtype=np.int16)
    for i in range(n):
        uidx[i] = np.searchsorted(tables[i], game.utilities[i])
    return uidx


def run(game: Game, config: LearnerConfig, rng: RandomSource | None = None) -> Trajectory:
    """Full run; compiled kernel by default, reference loop when rng given."""
    rho = config.resolve_rho(game)
    warnings = config.validate_for(game)
    tables = _value_tables(game)
    K = config.iterations
    n = game.n_agents
    trace_states = np.zeros((K, 3 * n), dtype=np.int16)
    trace_w = np.zeros(K, dtype=np.int16)

    if rng is None:
        uidx = _uidx_table(game, tables)
        max_nu = max(len(t) for t in tables)
        uvals = np.zeros((n, max_nu))
        for i, t in enumerate(tables):
            uvals[i, : len(t)] = t
        cdf = np.cumsum(np.asarray(game.disturbance_probs))
        beta = -1.0 if config.beta is None else float(config.beta)
        with np.errstate(over="ignore"):
            welfare_sum, final_eps = _kernels.run_learner(
                np.asarray(game.action_counts, dtype=np.int64),
                np.asarray(game.strides, dtype=np.int64),
                game.utilities,
                uidx,
                uvals,
                cdf,
                float(config.epsilon_initial),
                float(config.epsilon_decay),
                float(config.epsilon_floor),
                float(config.c),
                float(rho),
                float(INTERVAL_SLACK),
                beta,
                K,
                np.uint64(config.seed & SplitMix64.MASK),
                trace_states,
                trace_w,
            )
    else:
        state = initial_state(game)
        eps = config.epsilon_initial
        welfare_sum = 0.0
        for k in range(K):
            if k > 0:
                eps = max(eps * config.epsilon_decay, config.epsilon_floor)
            state, w, _, payoffs = step(
                game, state, eps, config.c, rho, rng, beta=config.beta
            )
            for u in payoffs:  # same accumulation order as the kernel
                welfare_sum += u
            for i, a in enumerate(state):
                trace_states[k, 3 * i] = a.action
                trace_states[k, 3 * i + 1] = int(
                    np.searchsorted(tables[i], a.utility)
                )
                trace_states[k, 3 * i + 2] = a.mood
            trace_w[k] = w
        final_eps = eps if K > 0 else config.epsilon_initial

    return Trajectory(
        game=game,
        config=config,
        rho=rho,
        states=trace_states,
        disturbances=trace_w,
        value_tables=tables,
        welfare_sum=float(welfare_sum),
        final_epsilon=float(final_eps),
        warnings=tuple(warnings),
    )


# -- config documents --------------------------------------------------


def config_from_dict(doc: dict, origin: str = "<dict>") -> tuple[str | None, LearnerConfig]:
    """Parse a run-config document; returns (game path or None, config)."""

    def fail(msg: str) -> ConfigError:
        return ConfigError(f"{origin}: {msg}")

    if not isinstance(doc, dict):
        raise fail("run config must be a JSON object")
    eps = doc.get("epsilon")
    if not isinstance(eps, dict) or "initial" not in eps:
        raise fail("'epsilon' must be an object with at least 'initial'")
    rho = doc.get("rho", "auto")
    if rho == "auto":
        rho_val = None
    else:
        try:
            rho_val = float(rho)
        except (TypeError, ValueError):
            raise fail(f"'rho' must be a number or \"auto\", got {rho!r}") from None
    beta = doc.get("beta")
    for key in ("c", "iterations", "seed"):
        if key not in doc:
            raise fail(f"missing required key {key!r}")
    try:
        config = LearnerConfig(
            epsilon_initial=float(eps["initial"]),
            epsilon_decay=float(eps.get("decay", 1.0)),
            c=float(doc["c"]),
            iterations=int(doc["iterations"]),
            seed=int(doc["seed"]),
            rho=rho_val,
            beta=None if beta is None else float(beta),
        )
    except ConfigError as exc:
        raise fail(str(exc)) from None
    game_path = doc.get("game")
    return (str(game_path) if game_path is not None else None), config


def load_run_config(path: str) -> tuple[str | None, LearnerConfig]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
            ) from exc
    return config_from_dict(doc, origin=path)


def with_seed(config: LearnerConfig, seed: int) -> LearnerConfig:
    return replace(config, seed=seed)
