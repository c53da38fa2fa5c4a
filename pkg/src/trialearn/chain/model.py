"""One-step transition structure of the learner chain.

For a fixed game and config the learner induces a finite Markov chain over
system states.  Every one-step outcome is a product of elementary factors:

  selection   Content plays baseline with prob 1 - eps^c, a particular
              other action with prob eps^c / (|A_i| - 1); Discontent plays
              uniformly;
  disturbance Pr_w;
  update      deterministic keep, or a re-evaluation coin landing Content
              with prob eps^(1-u);
  broadcast   (optional) in a mixed mood vector each locally Content agent
              stays Content with prob eps^beta.

Each factor is either eps-free, a pure power eps^p, or of the form
1 - eps^p with p > 0.  A transition probability is a sum of terms
const * eps^(sum of powers) * prod(1 - eps^q); its resistance (the eps
exponent as eps tends to 0) is the minimum power sum over contributing
terms, because every 1 - eps^q factor tends to 1 and all terms are
positive.

Exact arithmetic: each power atom (c, beta, 1 - u) is a finite double and
therefore an integer multiple of 2^-SCALE_BITS.  Powers are kept as exact
scaled integers so resistance comparisons, sums along paths and equality
tests have no rounding at all; floats appear only when evaluating numeric
probabilities or printing.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from ..errors import ConfigError
from ..games import INTERVAL_SLACK, Game, compute_rho
from ..learner import CONTENT, DISCONTENT, AgentState, SystemState

SCALE_BITS = 1200
SCALE = 1 << SCALE_BITS


def scale_exact(x: float) -> int:
    """Exact scaled-integer representation of a nonnegative double."""
    if not x >= 0.0:
        raise ConfigError(f"resistance atoms must be nonnegative, got {x!r}")
    p, q = float(x).as_integer_ratio()
    if SCALE % q:
        raise ConfigError(f"value {x!r} is not representable at scale 2^-{SCALE_BITS}")
    return p * (SCALE // q)


def unscale(power: int) -> float:
    """Float view of a scaled exponent (for display and fitting)."""
    return power / SCALE


class Term(NamedTuple):
    """One additive contribution to a transition probability."""

    const: float  # eps-free factor, > 0
    power: int  # scaled exponent of the pure eps power
    one_minus: tuple[float, ...]  # powers q of (1 - eps^q) factors

    def value(self, eps: float) -> float:
        p = self.const * eps ** unscale(self.power)
        for q in self.one_minus:
            p *= 1.0 - eps**q
        return p

    def limit0(self) -> float:
        """Value at eps = 0 (power 0 terms survive, others vanish)."""
        return self.const if self.power == 0 else 0.0


@dataclass(frozen=True)
class _Selection:
    """Per-agent selection branch: which action, at which cost."""

    action: int
    power: int  # scaled exponent (c for an experiment, 0 otherwise)
    const: float  # eps-free factor (1/(k-1) for experiments, 1/k uniform)
    one_minus_c: bool  # carries the (1 - eps^c) factor of a baseline play


@dataclass
class ChainModel:
    """Game + config bundle with cached one-step outcome structure."""

    game: Game
    c: float
    rho: float
    beta: float | None
    verified: bool
    c_power: int = field(init=False)
    beta_power: int = field(init=False)
    band: float = field(init=False)
    _support: dict = field(default_factory=dict, repr=False)
    _terms: dict = field(default_factory=dict, repr=False)
    _selections: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if self.c <= 0:
            raise ConfigError(f"c must be positive, got {self.c!r}")
        if self.rho < 0:
            raise ConfigError(f"rho must be nonnegative, got {self.rho!r}")
        if self.beta is not None and self.beta < 0:
            raise ConfigError(f"beta must be nonnegative, got {self.beta!r}")
        self.c_power = scale_exact(self.c)
        self.beta_power = 0 if self.beta is None else scale_exact(self.beta)
        self.band = self.rho + INTERVAL_SLACK

    @classmethod
    def create(
        cls,
        game: Game,
        c: float,
        rho: float | None = None,
        beta: float | None = None,
    ) -> "ChainModel":
        """rho=None computes it from the game (verified mode)."""
        verified = rho is None
        return cls(
            game=game,
            c=float(c),
            rho=compute_rho(game) if rho is None else float(rho),
            beta=beta,
            verified=verified,
        )

    # -- elementary structure ------------------------------------------

    def coin_power(self, agent: int, joint: int, w: int) -> int:
        """Scaled exponent 1 - u_agent(joint, w) of the Content coin."""
        return scale_exact(1.0 - float(self.game.utilities[agent, joint, w]))

    def aligned_discontent_states(self) -> list[SystemState]:
        """All-Discontent states aligned to some (profile, disturbance)."""
        game = self.game
        seen = set()
        out = []
        for p in range(game.n_profiles):
            prof = game.profile_of(p)
            for w in range(game.n_disturbances):
                z = tuple(
                    AgentState(prof[i], float(game.utilities[i, p, w]), DISCONTENT)
                    for i in range(game.n_agents)
                )
                if z not in seen:
                    seen.add(z)
                    out.append(z)
        return sorted(out)

    def content_fixed_points(self) -> list[SystemState]:
        """All-Content states the unperturbed dynamics cannot leave.

        Candidates have per-agent baselines (profile action, remembered
        payoff) with the remembered payoff inside the tolerance band of
        every disturbance's payoff at the profile.  Baseline payoffs range
        over the values the agent can receive while playing its profile
        action (the reachable-by-construction closure).
        """
        game = self.game
        out = []
        for p in range(game.n_profiles):
            prof = game.profile_of(p)
            per_agent: list[list[float]] = []
            for i in range(game.n_agents):
                here = game.utilities[i, p, :]
                # values attainable while i plays prof[i], at any opponent
                # profile and disturbance
                mask = [
                    q for q in range(game.n_profiles) if game.profile_of(q)[i] == prof[i]
                ]
                candidates = np.unique(game.utilities[i, mask, :])
                ok = [
                    float(u)
                    for u in candidates
                    if np.all(np.abs(here - u) <= self.band)
                ]
                per_agent.append(ok)
            for combo in itertools.product(*per_agent):
                out.append(
                    tuple(
                        AgentState(prof[i], combo[i], CONTENT)
                        for i in range(game.n_agents)
                    )
                )
        return sorted(set(out))

    # -- one-step outcomes ---------------------------------------------

    def _agent_selections(self, state_i: AgentState, agent: int) -> tuple[_Selection, ...]:
        key = (agent, state_i.action, state_i.mood)
        cached = self._selections.get(key)
        if cached is not None:
            return cached
        count = self.game.action_counts[agent]
        if state_i.mood == CONTENT:
            sels = [_Selection(state_i.action, 0, 1.0, True)]
            if count > 1:
                share = 1.0 / (count - 1)
                for a in range(count):
                    if a != state_i.action:
                        sels.append(_Selection(a, self.c_power, share, False))
        else:
            sels = [_Selection(a, 0, 1.0 / count, False) for a in range(count)]
        out = tuple(sels)
        self._selections[key] = out
        return out

    def _enumerate(self, state: SystemState, with_terms: bool):
        """Shared engine behind support_outcomes and term_outcomes."""
        game = self.game
        n = game.n_agents
        support: dict[SystemState, int] = {}
        terms: dict[SystemState, list[Term]] = {}
        selections = [self._agent_selections(state[i], i) for i in range(n)]
        strides = game.strides
        beta_on = self.beta is not None
        beta_zero = beta_on and self.beta == 0.0

        for sel_combo in itertools.product(*selections):
            joint = 0
            sel_power = 0
            sel_const = 1.0
            n_baseline = 0
            for i, s in enumerate(sel_combo):
                joint += s.action * strides[i]
                sel_power += s.power
                sel_const *= s.const
                n_baseline += s.one_minus_c
            for w in range(game.n_disturbances):
                w_const = sel_const * game.disturbance_probs[w]
                # per-agent update branches
                branch_sets = []
                for i in range(n):
                    a_i = sel_combo[i].action
                    u = float(game.utilities[i, joint, w])
                    zi = state[i]
                    if (
                        zi.mood == CONTENT
                        and a_i == zi.action
                        and abs(u - zi.utility) <= self.band
                    ):
                        branch_sets.append(((zi, 0, None),))
                    else:
                        cp = self.coin_power(i, joint, w)
                        new_c = AgentState(a_i, u, CONTENT)
                        new_d = AgentState(a_i, u, DISCONTENT)
                        # (next agent state, power, one-minus power or None)
                        branch_sets.append(
                            ((new_c, cp, None), (new_d, 0, 1.0 - u))
                        )
                for combo in itertools.product(*branch_sets):
                    power = sel_power
                    ones: list[float] = [self.c] * n_baseline if with_terms else []
                    agents = []
                    for zi, p, om in combo:
                        power += p
                        agents.append(zi)
                        if with_terms and om is not None:
                            ones.append(om)
                    moods = [zi.mood for zi in agents]
                    any_c = CONTENT in moods
                    any_d = DISCONTENT in moods
                    if beta_on and any_c and any_d:
                        # mixed vector: expand broadcast per Content agent
                        content_idx = [i for i, m in enumerate(moods) if m == CONTENT]
                        if beta_zero:
                            # eps^0 = 1: Content survives surely
                            flip_sets = ((False,),) * len(content_idx)
                        else:
                            flip_sets = ((False, True),) * len(content_idx)
                        for flips in itertools.product(*flip_sets):
                            b_power = power
                            b_ones = list(ones)
                            final = list(agents)
                            for idx, flip in zip(content_idx, flips):
                                if flip:
                                    final[idx] = final[idx]._replace(mood=DISCONTENT)
                                    if with_terms:
                                        b_ones.append(self.beta)
                                else:
                                    b_power += self.beta_power
                            y = tuple(final)
                            old = support.get(y)
                            if old is None or b_power < old:
                                support[y] = b_power
                            if with_terms:
                                terms.setdefault(y, []).append(
                                    Term(w_const, b_power, tuple(b_ones))
                                )
                    else:
                        y = tuple(agents)
                        old = support.get(y)
                        if old is None or power < old:
                            support[y] = power
                        if with_terms:
                            terms.setdefault(y, []).append(
                                Term(w_const, power, tuple(ones))
                            )
        return support, terms

    def support_outcomes(self, state: SystemState) -> dict[SystemState, int]:
        """Map successor -> exact minimum scaled exponent (the resistance)."""
        cached = self._support.get(state)
        if cached is None:
            cached, _ = self._enumerate(state, with_terms=False)
            self._support[state] = cached
        return cached

    def term_outcomes(self, state: SystemState) -> dict[SystemState, list[Term]]:
        """Map successor -> all probability terms (for numeric evaluation)."""
        cached = self._terms.get(state)
        if cached is None:
            support, cached = self._enumerate(state, with_terms=True)
            self._support.setdefault(state, support)
            self._terms[state] = cached
        return cached

    def transition_probability(self, x: SystemState, y: SystemState, eps: float) -> float:
        """Exact-sum numeric probability of x -> y at the given eps."""
        terms = self.term_outcomes(x).get(y)
        if not terms:
            return 0.0
        if eps == 0.0:
            return float(sum(t.limit0() for t in terms))
        return float(sum(t.value(eps) for t in terms))


def states_sorted(states: Iterable[SystemState]) -> list[SystemState]:
    return sorted(states)
