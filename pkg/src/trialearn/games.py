"""Finite n-person games with a finite disturbance set.

A Game stores explicit utility tables u_i(a, w) in [0, 1) for every agent i,
joint action a and disturbance w, plus a fully supported probability
distribution over disturbances.  This module exposes the structural
quantities the learner and the chain analysis need: the disturbance
tolerance rho (the largest payoff deviation attributable to the disturbance
alone), the interdependence property (no proper subset of agents is
payoff-isolated from the rest), and welfare queries.

Joint actions are indexed in mixed radix with agent 0 most significant, so
the numeric order of profile indices equals lexicographic order of profile
tuples.  All operations are pure; Game instances are immutable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Sequence

import numpy as np

from .errors import GameFormatError

ActionProfile = tuple[int, ...]

# Slack used when comparing payoff deviations against rho.  A deviation d is
# "inside the tolerance band" iff d <= rho + INTERVAL_SLACK; the
# interdependence test uses the exact complement (d > rho + INTERVAL_SLACK)
# so the two predicates can never both hold.
INTERVAL_SLACK = 1e-12

# check_interdependence enumerates all proper subsets of agents; cost grows
# as 2^n, so refuse clearly unreasonable inputs instead of hanging.
INTERDEPENDENCE_MAX_AGENTS = 12


def _product(values: Iterable[int]) -> int:
    out = 1
    for v in values:
        out *= v
    return out


@dataclass(frozen=True, eq=False)
class Game:
    """Immutable finite game; build via the module constructors."""

    agents: tuple[str, ...]
    actions: tuple[tuple[str, ...], ...]
    disturbances: tuple[str, ...]
    disturbance_probs: tuple[float, ...]
    # utilities[i, p, w] = u_i(profile p, disturbance w); profile p is the
    # mixed-radix index of the joint action.
    utilities: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "utilities", np.asarray(self.utilities, dtype=np.float64))
        self.utilities.setflags(write=False)
        self._validate()

    def _validate(self) -> None:
        n = len(self.agents)
        if n < 1:
            raise GameFormatError("game needs at least one agent")
        if len(self.actions) != n:
            raise GameFormatError("actions list length != agent count")
        for i, acts in enumerate(self.actions):
            if len(acts) < 1:
                raise GameFormatError(f"agent {self.agents[i]!r} has an empty action set")
            if len(set(acts)) != len(acts):
                raise GameFormatError(f"agent {self.agents[i]!r} has duplicate action names")
        if len(set(self.agents)) != n:
            raise GameFormatError("duplicate agent names")
        if len(self.disturbances) < 1:
            raise GameFormatError("game needs at least one disturbance value")
        if len(set(self.disturbances)) != len(self.disturbances):
            raise GameFormatError("duplicate disturbance names")
        if len(self.disturbance_probs) != len(self.disturbances):
            raise GameFormatError("disturbance_probs length != disturbance count")
        for name, p in zip(self.disturbances, self.disturbance_probs):
            if not (p > 0.0):
                raise GameFormatError(
                    f"disturbance {name!r} has probability {p!r}; must be strictly positive"
                )
        total = math.fsum(self.disturbance_probs)
        if abs(total - 1.0) > 1e-9:
            raise GameFormatError(f"disturbance probabilities sum to {total!r}, not 1")
        expected = (n, self.n_profiles, len(self.disturbances))
        if self.utilities.shape != expected:
            raise GameFormatError(
                f"utilities shape {self.utilities.shape} != expected {expected}"
            )
        # Strict upper bound: a utility of exactly 1 would make the
        # re-evaluation coin deterministic and break the perturbation
        # structure, so no tolerance is applied here.
        if not np.all((self.utilities >= 0.0) & (self.utilities < 1.0)):
            bad = np.argwhere(~((self.utilities >= 0.0) & (self.utilities < 1.0)))[0]
            i, p, w = (int(v) for v in bad)
            raise GameFormatError(
                f"utility {self.utilities[i, p, w]!r} for agent {self.agents[i]!r}, "
                f"profile {self.profile_of(p)}, disturbance {self.disturbances[w]!r} "
                "is outside [0, 1)"
            )

    # -- shape helpers -------------------------------------------------

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def action_counts(self) -> tuple[int, ...]:
        return tuple(len(a) for a in self.actions)

    @property
    def n_profiles(self) -> int:
        return _product(self.action_counts)

    @property
    def n_disturbances(self) -> int:
        return len(self.disturbances)

    @property
    def strides(self) -> tuple[int, ...]:
        counts = self.action_counts
        strides = [1] * len(counts)
        for i in range(len(counts) - 2, -1, -1):
            strides[i] = strides[i + 1] * counts[i + 1]
        return tuple(strides)

    def joint_index(self, profile: Sequence[int]) -> int:
        if len(profile) != self.n_agents:
            raise GameFormatError(f"profile {tuple(profile)} has wrong length")
        idx = 0
        for i, (a, count, stride) in enumerate(zip(profile, self.action_counts, self.strides)):
            if not 0 <= a < count:
                raise GameFormatError(
                    f"action index {a} invalid for agent {self.agents[i]!r}"
                )
            idx += a * stride
        return idx

    def profile_of(self, index: int) -> ActionProfile:
        out = []
        for count, stride in zip(self.action_counts, self.strides):
            out.append((index // stride) % count)
        return tuple(out)

    def profiles(self) -> Iterator[ActionProfile]:
        for p in range(self.n_profiles):
            yield self.profile_of(p)

    # -- queries -------------------------------------------------------

    def utility(self, agent: int, profile: Sequence[int], w: int) -> float:
        return float(self.utilities[agent, self.joint_index(profile), w])

    def payoffs(self, profile: Sequence[int], w: int) -> np.ndarray:
        """Payoff vector of all agents at (profile, disturbance)."""
        return self.utilities[:, self.joint_index(profile), w].copy()

    def utility_values(self, agent: int) -> np.ndarray:
        """Sorted unique payoff values agent can ever receive."""
        return np.unique(self.utilities[agent])


@dataclass(frozen=True)
class WelfareReport:
    """Result of exhaustive welfare maximisation over profiles x disturbances."""

    max_value: float
    argmax: tuple[tuple[ActionProfile, int], ...]  # lexicographic (profile, w) order
    totals: np.ndarray = field(repr=False)  # (n_profiles, n_disturbances)


@dataclass(frozen=True)
class InterdependenceReport:
    holds: bool
    # On failure: the (profile, disturbance, frozen agent subset) whose
    # payoffs no outside agent can push beyond rho.
    witness: tuple[ActionProfile, int, frozenset[int]] | None
    rho: float

    def __bool__(self) -> bool:
        return self.holds


def compute_rho(game: Game) -> float:
    """Largest payoff change attributable to the disturbance alone.

    Maximum over agents i, profiles a and disturbance pairs (w1, w2) of
    |u_i(a, w1) - u_i(a, w2)|.  Zero iff every agent's payoffs are
    disturbance-independent at every profile.
    """
    u = game.utilities
    if game.n_disturbances == 1:
        return 0.0
    spread = u.max(axis=2) - u.min(axis=2)
    return float(spread.max())


def welfare(game: Game, profile: Sequence[int], w: int) -> float:
    """Sum of all agents' payoffs at (profile, disturbance w)."""
    if not 0 <= w < game.n_disturbances:
        raise GameFormatError(f"disturbance index {w} out of range")
    return float(game.utilities[:, game.joint_index(profile), w].sum())


def welfare_argmax(game: Game) -> WelfareReport:
    """Exhaustive welfare maximisation; ties all reported, lexicographic."""
    totals = game.utilities.sum(axis=0)
    best = float(totals.max())
    pairs = []
    for p in range(game.n_profiles):
        for w in range(game.n_disturbances):
            # Exact equality: tied sums are computed by the identical
            # reduction, so representational noise cannot split them.
            if float(totals[p, w]) == best:
                pairs.append((game.profile_of(p), w))
    totals_copy = totals.copy()
    totals_copy.setflags(write=False)
    return WelfareReport(max_value=best, argmax=tuple(pairs), totals=totals_copy)


def check_interdependence(game: Game, rho: float) -> InterdependenceReport:
    """Test that no proper subset of agents is payoff-isolated.

    Holds iff for every profile a, every disturbance w and every proper
    nonempty agent subset J there is an agent i outside J, a deviation of
    the J-coordinates and a disturbance w' moving i's payoff by strictly
    more than rho (beyond the tolerance slack).  On failure the first
    violating (a, w, J) in deterministic order is returned as witness.
    """
    if rho < 0:
        raise GameFormatError(f"rho must be nonnegative, got {rho!r}")
    n = game.n_agents
    if n > INTERDEPENDENCE_MAX_AGENTS:
        raise GameFormatError(
            f"interdependence check is exponential in agents; n={n} exceeds the "
            f"cap of {INTERDEPENDENCE_MAX_AGENTS}"
        )
    if n == 1:
        # No proper nonempty subset exists; the condition is vacuous.
        return InterdependenceReport(holds=True, witness=None, rho=rho)

    u = game.utilities
    n_profiles = game.n_profiles
    counts = game.action_counts
    strides = game.strides
    threshold = rho + INTERVAL_SLACK

    profile_coords = np.empty((n_profiles, n), dtype=np.int64)
    for p in range(n_profiles):
        profile_coords[p] = game.profile_of(p)

    for mask in range(1, (1 << n) - 1):
        members = [i for i in range(n) if mask >> i & 1]
        outside = [i for i in range(n) if not mask >> i & 1]
        # Profiles agreeing outside J share a block; deviations of the J
        # coordinates move within the block.  Block id = profile index with
        # the J coordinates zeroed.
        zero_out = sum(profile_coords[:, j] * strides[j] for j in members)
        block_id = np.arange(n_profiles) - zero_out
        n_blocks = n_profiles // _product(counts[j] for j in members)
        block_index = {b: k for k, b in enumerate(sorted(set(block_id.tolist())))}
        assert len(block_index) == n_blocks
        block_of = np.array([block_index[b] for b in block_id.tolist()])
        ok_any = np.zeros((n_profiles, game.n_disturbances), dtype=bool)
        for i in outside:
            # The deviation may land on any disturbance, so the reachable
            # extremes pool every w inside the block; only the base payoff
            # is pinned to its own (profile, w).
            lo = np.full(n_blocks, np.inf)
            hi = np.full(n_blocks, -np.inf)
            ui = u[i]  # (n_profiles, n_w)
            np.minimum.at(lo, block_of, ui.min(axis=1))
            np.maximum.at(hi, block_of, ui.max(axis=1))
            reach_lo = lo[block_of][:, None]
            reach_hi = hi[block_of][:, None]
            moved = np.maximum(ui - reach_lo, reach_hi - ui) > threshold
            ok_any |= moved
        if not ok_any.all():
            p, w = (int(v) for v in np.argwhere(~ok_any)[0])
            return InterdependenceReport(
                holds=False,
                witness=(game.profile_of(p), w, frozenset(members)),
                rho=rho,
            )
    return InterdependenceReport(holds=True, witness=None, rho=rho)


# -- serialization -----------------------------------------------------


def load_game(source: str | IO[str]) -> Game:
    """Parse a game document (JSON) into a Game.

    The document is an object with keys `agents` (list of {name,
    actions: [string]}), `disturbances` (list of {name, prob}) and
    `utilities` (list of {profile: [string], disturbance: string,
    payoffs: [number]} with payoffs in agent order).  Errors name the
    offending entry; JSON syntax errors carry line and column.
    """
    if hasattr(source, "read"):
        text = source.read()
        origin = getattr(source, "name", "<stream>")
    else:
        origin = str(source)
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GameFormatError(
            f"{origin}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    return game_from_dict(doc, origin=origin)


def game_from_dict(doc: dict, origin: str = "<dict>") -> Game:
    def fail(msg: str) -> GameFormatError:
        return GameFormatError(f"{origin}: {msg}")

    if not isinstance(doc, dict):
        raise fail("top level must be a JSON object")
    for key in ("agents", "disturbances", "utilities"):
        if key not in doc:
            raise fail(f"missing required key {key!r}")

    agents = []
    actions = []
    for k, entry in enumerate(doc["agents"]):
        if not isinstance(entry, dict) or "name" not in entry or "actions" not in entry:
            raise fail(f"agents[{k}] must be an object with 'name' and 'actions'")
        agents.append(str(entry["name"]))
        acts = entry["actions"]
        if not isinstance(acts, list) or not acts:
            raise fail(f"agents[{k}].actions must be a nonempty list")
        actions.append(tuple(str(a) for a in acts))

    dist_names = []
    dist_probs = []
    for k, entry in enumerate(doc["disturbances"]):
        if not isinstance(entry, dict) or "name" not in entry or "prob" not in entry:
            raise fail(f"disturbances[{k}] must be an object with 'name' and 'prob'")
        dist_names.append(str(entry["name"]))
        try:
            dist_probs.append(float(entry["prob"]))
        except (TypeError, ValueError):
            raise fail(f"disturbances[{k}].prob is not a number") from None

    n = len(agents)
    if n == 0:
        raise fail("agents list is empty")
    if not dist_names:
        raise fail("disturbances list is empty")
    action_index = [{name: i for i, name in enumerate(acts)} for acts in actions]
    dist_index = {name: i for i, name in enumerate(dist_names)}
    counts = [len(a) for a in actions]
    n_profiles = _product(counts)
    strides = [1] * n
    for i in range(n - 2, -1, -1):
        strides[i] = strides[i + 1] * counts[i + 1]

    utilities = np.full((n, n_profiles, len(dist_names)), np.nan)
    rows = doc["utilities"]
    if not isinstance(rows, list):
        raise fail("utilities must be a list")
    for k, row in enumerate(rows):
        where = f"utilities[{k}]"
        if not isinstance(row, dict):
            raise fail(f"{where} must be an object")
        for key in ("profile", "disturbance", "payoffs"):
            if key not in row:
                raise fail(f"{where} missing key {key!r}")
        prof_names = row["profile"]
        if not isinstance(prof_names, list) or len(prof_names) != n:
            raise fail(f"{where}.profile must list one action per agent ({n} expected)")
        idx = 0
        for i, name in enumerate(prof_names):
            try:
                idx += action_index[i][str(name)] * strides[i]
            except KeyError:
                raise fail(
                    f"{where}.profile[{i}]: unknown action {name!r} for agent {agents[i]!r}"
                ) from None
        if str(row["disturbance"]) not in dist_index:
            raise fail(f"{where}.disturbance: unknown disturbance {row['disturbance']!r}")
        w = dist_index[str(row["disturbance"])]
        payoffs = row["payoffs"]
        if not isinstance(payoffs, list) or len(payoffs) != n:
            raise fail(f"{where}.payoffs must list one number per agent ({n} expected)")
        if not np.all(np.isnan(utilities[:, idx, w])):
            raise fail(
                f"{where}: duplicate entry for profile {prof_names} "
                f"disturbance {row['disturbance']!r}"
            )
        for i, v in enumerate(payoffs):
            try:
                utilities[i, idx, w] = float(v)
            except (TypeError, ValueError):
                raise fail(f"{where}.payoffs[{i}] is not a number") from None

    if np.isnan(utilities).any():
        i, p, w = (int(v) for v in np.argwhere(np.isnan(utilities))[0])
        prof = []
        for count, stride, acts in zip(counts, strides, actions):
            prof.append(acts[(p // stride) % count])
        raise fail(
            "utilities table not total: missing entry for profile "
            f"{prof} disturbance {dist_names[w]!r}"
        )

    try:
        return Game(
            agents=tuple(agents),
            actions=tuple(actions),
            disturbances=tuple(dist_names),
            disturbance_probs=tuple(dist_probs),
            utilities=utilities,
        )
    except GameFormatError as exc:
        raise fail(str(exc)) from None


def game_to_dict(game: Game) -> dict:
    rows = []
    for p in range(game.n_profiles):
        prof = game.profile_of(p)
        names = [game.actions[i][a] for i, a in enumerate(prof)]
        for w, dname in enumerate(game.disturbances):
            rows.append(
                {
                    "profile": names,
                    "disturbance": dname,
                    "payoffs": [float(game.utilities[i, p, w]) for i in range(game.n_agents)],
                }
            )
    return {
        "agents": [
            {"name": name, "actions": list(acts)}
            for name, acts in zip(game.agents, game.actions)
        ],
        "disturbances": [
            {"name": name, "prob": prob}
            for name, prob in zip(game.disturbances, game.disturbance_probs)
        ],
        "utilities": rows,
    }


def save_game(game: Game, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(game_to_dict(game), fh, indent=2)
        fh.write("\n")


# -- random instances --------------------------------------------------


@dataclass(frozen=True)
class RandomGameSpec:
    """Shape and texture of a generated instance.

    Utilities take the form u_i(a, w) = g_i(a) + shift(w): a per-agent
    action-dependent part plus a disturbance shift common to all agents
    and profiles.  The shift spread alone therefore determines rho.  The
    g_i values live on a coarse grid whose spacing exceeds 3x the shift
    spread and are driven by a shared injective ranking of the joint
    profiles, so every unilateral deviation moves every agent's payoff
    beyond rho: the instances are interdependent by construction, with
    complete cascade behaviour and a unique welfare maximiser (enforced
    by rejection).
    """

    action_counts: tuple[int, ...]
    n_disturbances: int = 2
    shift_spread: float = 0.02

    def __post_init__(self) -> None:
        if not self.action_counts or any(c < 1 for c in self.action_counts):
            raise GameFormatError("action_counts must be positive")
        if self.n_disturbances < 1:
            raise GameFormatError("need at least one disturbance")
        if not 0.0 <= self.shift_spread < 0.05:
            raise GameFormatError("shift_spread must lie in [0, 0.05)")
        if self.n_disturbances > 1 and self.shift_spread <= 0.0:
            raise GameFormatError("several disturbances need a positive shift_spread")


def random_game(spec: RandomGameSpec, seed: int) -> Game:
    """Deterministic interdependent instance for the given seed."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, 0x72616E64)))
    n = len(spec.action_counts)
    n_profiles = _product(spec.action_counts)
    n_w = spec.n_disturbances
    spread = spec.shift_spread if n_w > 1 else 0.0

    lo, hi = 0.08, 0.90
    gap = 3.0 * max(spread, 1e-3)
    max_levels = int((hi - lo) / gap) + 1
    if n_profiles > max_levels:
        raise GameFormatError(
            f"{n_profiles} profiles do not fit the utility grid at spread "
            f"{spread!r}; reduce action counts or the spread"
        )
    levels = lo + gap * np.arange(n_profiles)

    for attempt in range(64):
        # One independent injective level assignment per agent: any change
        # of the joint profile moves every agent by at least `gap` > rho.
        g = np.stack([levels[rng.permutation(n_profiles)] for _ in range(n)])
        if n_w > 1:
            shift = np.sort(rng.uniform(0.0, spread, size=n_w))
            shift[0] = 0.0
            shift[-1] = spread
        else:
            shift = np.zeros(1)
        utilities = g[:, :, None] + shift[None, None, :]
        totals = utilities.sum(axis=0)
        flat = totals.ravel()
        order = np.argsort(flat)
        if n_profiles * n_w > 1 and flat[order[-1]] - flat[order[-2]] < spread / 2 + 1e-9:
            continue  # welfare argmax tie or near-tie: resample
        if utilities.max() >= 1.0 - 1e-9:
            continue
        probs = rng.uniform(0.5, 1.5, size=n_w)
        probs = probs / probs.sum()
        return Game(
            agents=tuple(f"a{i}" for i in range(n)),
            actions=tuple(
                tuple(f"x{j}" for j in range(c)) for c in spec.action_counts
            ),
            disturbances=tuple(f"w{k}" for k in range(n_w)),
            disturbance_probs=tuple(float(p) for p in probs),
            utilities=utilities,
        )
    raise GameFormatError("random_game failed to produce a tie-free instance")
