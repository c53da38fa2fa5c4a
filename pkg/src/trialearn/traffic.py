"""Synthetic freeway ramp-coordination games.

A first-order cell-transmission freeway with capacity drop is simulated
under fixed low-level metering policies; each onramp is an agent choosing
between local density feedback (LOC) and downstream-coordinated queue
balancing (COR). Demand days act as the disturbance. Tabulating the
per-ramp costs of every policy profile under every day yields a Game the
learner can run on unchanged.

Units: lengths km, speeds km/h, densities veh/km, flows veh/h, the
simulation step in hours. Costs are vehicle-hours (total time spent).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._kernels import (
    ACTION_COR,
    ACTION_FIXED_RATE,
    ACTION_LOC,
    ACTION_NO_METERING,
    run_ctm,
)
from .errors import ConfigError, ConvergenceError, GameFormatError
from .games import Game, load_game, save_game

CFL_SLACK = 1e-9
MAX_TRAFFIC_AGENTS = 12
UTILITY_CEILING = 1.0 - 1e-6

ACTION_NAMES = ("LOC", "COR")


@dataclass(frozen=True)
class FreewaySpec:
    """Static freeway geometry, fundamental diagrams, and horizon."""

    cell_lengths: tuple[float, ...]
    free_flow_speed: tuple[float, ...]
    wave_speed: tuple[float, ...]
    jam_density: tuple[float, ...]
    critical_density: tuple[float, ...]
    capacity: tuple[float, ...]
    capacity_drop_rate: tuple[float, ...]
    ramp_cells: tuple[int, ...]
    ramp_lengths: tuple[float, ...]
    step: float
    horizon: int

    def __post_init__(self) -> None:
        n = len(self.cell_lengths)
        if n == 0:
            raise ConfigError("freeway needs at least one cell")
        per_cell = {
            "free_flow_speed": self.free_flow_speed,
            "wave_speed": self.wave_speed,
            "jam_density": self.jam_density,
            "critical_density": self.critical_density,
            "capacity": self.capacity,
            "capacity_drop_rate": self.capacity_drop_rate,
        }
        for name, values in per_cell.items():
            if len(values) != n:
                raise ConfigError(
                    f"{name} has {len(values)} entries for {n} cells"
                )
        for i in range(n):
            if self.cell_lengths[i] <= 0:
                raise ConfigError(f"cell {i}: length must be positive")
            if self.free_flow_speed[i] <= 0 or self.wave_speed[i] <= 0:
                raise ConfigError(f"cell {i}: speeds must be positive")
            if not 0 < self.critical_density[i] < self.jam_density[i]:
                raise ConfigError(
                    f"cell {i}: need 0 < critical density < jam density, got "
                    f"{self.critical_density[i]!r} vs {self.jam_density[i]!r}"
                )
            if self.capacity[i] <= 0:
                raise ConfigError(f"cell {i}: capacity must be positive")
            if self.capacity[i] > self.free_flow_speed[i] * self.critical_density[i] + 1e-9:
                raise ConfigError(
                    f"cell {i}: capacity unreachable below the critical density"
                )
            if self.capacity_drop_rate[i] < 0:
                raise ConfigError(f"cell {i}: capacity drop rate must be nonnegative")
            fastest = max(self.free_flow_speed[i], self.wave_speed[i])
            if self.step * fastest > self.cell_lengths[i] + CFL_SLACK:
                raise ConfigError(
                    f"cell {i}: step {self.step!r} h violates the CFL bound "
                    f"{self.cell_lengths[i] / fastest!r} h"
                )
        if self.step <= 0:
            raise ConfigError("step must be positive")
        if self.horizon < 0:
            raise ConfigError("horizon must be nonnegative")
        if len(self.ramp_lengths) != len(self.ramp_cells):
            raise ConfigError("ramp_lengths and ramp_cells differ in length")
        prev = -1
        for j, cell in enumerate(self.ramp_cells):
            if not 0 <= cell < n:
                raise ConfigError(f"ramp {j}: cell {cell} out of range")
            if cell <= prev:
                raise ConfigError("ramp cells must be strictly increasing")
            prev = cell
            if self.ramp_lengths[j] <= 0:
                raise ConfigError(f"ramp {j}: length must be positive")

    @property
    def n_cells(self) -> int:
        return len(self.cell_lengths)

    @property
    def n_ramps(self) -> int:
        return len(self.ramp_cells)

    def max_queue(self, ramp: int) -> float:
        """Ramp storage in vehicles; full storage is occupancy one."""
        return self.ramp_lengths[ramp] * self.jam_density[self.ramp_cells[ramp]]

    def section_of_cells(self) -> np.ndarray:
        """Ramp section index per cell; -1 for cells billed to no ramp.

        A section runs from its ramp's merge cell up to the next ramp's.
        Cells upstream of the first ramp are an entry reservoir outside
        every section, so their travel time charges no agent.
        """
        out = np.full(self.n_cells, -1, dtype=np.int64)
        for i in range(self.n_cells):
            for j, cell in enumerate(self.ramp_cells):
                if i >= cell:
                    out[i] = j
        return out


@dataclass(frozen=True)
class DemandProfile:
    """One disturbance value: a named day of inflow demands."""

    name: str
    mainline: np.ndarray  # (horizon,) veh/h
    ramp_arrivals: np.ndarray  # (horizon, n_ramps) veh/h

    def __post_init__(self) -> None:
        ml = np.asarray(self.mainline, dtype=np.float64)
        ra = np.asarray(self.ramp_arrivals, dtype=np.float64)
        if ra.ndim != 2:
            raise ConfigError(f"day {self.name!r}: ramp arrivals must be 2-d")
        if ml.ndim != 1 or ml.shape[0] != ra.shape[0]:
            raise ConfigError(
                f"day {self.name!r}: mainline and ramp arrival horizons differ"
            )
        if (ml < 0).any() or (ra < 0).any():
            raise ConfigError(f"day {self.name!r}: demands must be nonnegative")
        ml.setflags(write=False)
        ra.setflags(write=False)
        object.__setattr__(self, "mainline", ml)
        object.__setattr__(self, "ramp_arrivals", ra)

    def validate_for(self, spec: FreewaySpec) -> None:
        if self.mainline.shape[0] != spec.horizon:
            raise ConfigError(
                f"day {self.name!r}: horizon {self.mainline.shape[0]} does not "
                f"match the freeway horizon {spec.horizon}"
            )
        if self.ramp_arrivals.shape[1] != spec.n_ramps:
            raise ConfigError(
                f"day {self.name!r}: {self.ramp_arrivals.shape[1]} ramp demand "
                f"columns for {spec.n_ramps} ramps"
            )


@dataclass(frozen=True)
class TrafficState:
    densities: tuple[float, ...]  # veh/km per cell
    queues: tuple[float, ...]  # veh per ramp
    rates: tuple[float, ...]  # veh/h per ramp

    def vehicles(self, spec: FreewaySpec) -> float:
        on_road = sum(k * l for k, l in zip(self.densities, spec.cell_lengths))
        return on_road + sum(self.queues)


@dataclass(frozen=True)
class MeteringGains:
    k_loc: float = 200.0  # veh/h gained per veh/km of spare density
    k_cor: float = 1500.0  # veh/h per unit occupancy difference
    rate_min: float = 20.0
    rate_max: float = 2000.0

    def __post_init__(self) -> None:
        if not self.rate_min <= self.rate_max:
            raise ConfigError("rate_min must not exceed rate_max")
        if self.rate_min < 0:
            raise ConfigError("rate_min must be nonnegative")


def initial_state(spec: FreewaySpec, gains: MeteringGains | None = None) -> TrafficState:
    """Empty freeway; meters start fully open."""
    g = gains or MeteringGains()
    return TrafficState(
        densities=(0.0,) * spec.n_cells,
        queues=(0.0,) * spec.n_ramps,
        rates=(g.rate_max,) * spec.n_ramps,
    )


def sending_flow(spec: FreewaySpec, cell: int, density: float) -> float:
    """Demand part of the fundamental diagram, with the capacity drop."""
    if density <= spec.critical_density[cell]:
        return min(spec.free_flow_speed[cell] * density, spec.capacity[cell])
    drop = spec.capacity_drop_rate[cell] * (density - spec.critical_density[cell])
    return max(spec.capacity[cell] - drop, 0.0)


def receiving_flow(spec: FreewaySpec, cell: int, density: float) -> float:
    slack = spec.wave_speed[cell] * (spec.jam_density[cell] - density)
    return max(min(spec.capacity[cell], slack), 0.0)


def metering_policy(
    action: str,
    rate: float,
    local_density: float,
    critical_density: float,
    ramp_occupancy: float,
    downstream_occupancy: float | None,
    gains: MeteringGains,
) -> float:
    """One integral-feedback rate update for a single ramp.

    LOC steers the merge cell toward its critical density; COR tracks
    the next downstream ramp's queue occupancy, releasing faster while
    the downstream queue is fuller. A ramp with no downstream neighbour
    always falls back to LOC.
    """
    if action not in ACTION_NAMES:
        raise ConfigError(f"unknown metering action {action!r}")
    if not 0.0 <= ramp_occupancy <= 1.0:
        raise ConfigError(f"ramp occupancy out of [0,1]: {ramp_occupancy!r}")
    if action == "COR" and downstream_occupancy is not None:
        if not 0.0 <= downstream_occupancy <= 1.0:
            raise ConfigError(
                f"downstream occupancy out of [0,1]: {downstream_occupancy!r}"
            )
        delta = gains.k_cor * (downstream_occupancy - ramp_occupancy)
    else:
        delta = gains.k_loc * (critical_density - local_density)
    return float(min(max(rate + delta, gains.rate_min), gains.rate_max))


def _spec_arrays(spec: FreewaySpec) -> dict[str, np.ndarray]:
    return {
        "lengths": np.array(spec.cell_lengths),
        "v_free": np.array(spec.free_flow_speed),
        "v_wave": np.array(spec.wave_speed),
        "k_jam": np.array(spec.jam_density),
        "k_crit": np.array(spec.critical_density),
        "capacity": np.array(spec.capacity),
        "drop_rate": np.array(spec.capacity_drop_rate),
        "ramp_cells": np.array(spec.ramp_cells, dtype=np.int64),
        "max_queue": np.array([spec.max_queue(j) for j in range(spec.n_ramps)]),
        "section_of": spec.section_of_cells(),
    }


def _run(
    spec: FreewaySpec,
    mainline: np.ndarray,
    arrivals: np.ndarray,
    actions: np.ndarray,
    gains: MeteringGains,
    state: TrafficState,
    horizon: int,
) -> tuple[TrafficState, np.ndarray, np.ndarray]:
    arrs = _spec_arrays(spec)
    densities = np.array(state.densities)
    queues = np.array(state.queues)
    rates = np.array(state.rates)
    costs = np.zeros(spec.n_ramps)
    out_flow = np.zeros(horizon)
    status = run_ctm(
        arrs["lengths"],
        arrs["v_free"],
        arrs["v_wave"],
        arrs["k_jam"],
        arrs["k_crit"],
        arrs["capacity"],
        arrs["drop_rate"],
        arrs["ramp_cells"],
        arrs["max_queue"],
        arrs["section_of"],
        spec.step,
        horizon,
        mainline,
        arrivals,
        actions,
        gains.k_loc,
        gains.k_cor,
        gains.rate_min,
        gains.rate_max,
        densities,
        queues,
        rates,
        costs,
        out_flow,
    )
    if status != 0:
        bad = int(status) - 1
        step_idx, cell = divmod(bad, spec.n_cells)
        raise ConvergenceError(
            f"density left [0, jam] at step {step_idx}, cell {cell}"
        )
    final = TrafficState(
        densities=tuple(float(x) for x in densities),
        queues=tuple(float(x) for x in queues),
        rates=tuple(float(x) for x in rates),
    )
    return final, costs, out_flow


def ctm_step(
    state: TrafficState,
    spec: FreewaySpec,
    mainline_inflow: float,
    ramp_arrivals: Sequence[float],
    rates: Sequence[float] | None = None,
) -> TrafficState:
    """Advance the freeway by one step with explicitly given meter rates.

    rates None keeps the rates stored in the state. No policy runs here;
    this is the raw conservation update.
    """
    if mainline_inflow < 0 or any(a < 0 for a in ramp_arrivals):
        raise ConfigError("demands must be nonnegative")
    if len(ramp_arrivals) != spec.n_ramps:
        raise ConfigError(
            f"{len(ramp_arrivals)} ramp arrival values for {spec.n_ramps} ramps"
        )
    base = state if rates is None else TrafficState(
        densities=state.densities,
        queues=state.queues,
        rates=tuple(float(r) for r in rates),
    )
    actions = np.full(spec.n_ramps, ACTION_FIXED_RATE, dtype=np.int64)
    mainline = np.array([float(mainline_inflow)])
    arrivals = np.array([list(map(float, ramp_arrivals))]).reshape(1, spec.n_ramps)
    final, _, _ = _run(spec, mainline, arrivals, actions, MeteringGains(), base, 1)
    return final


@dataclass(frozen=True)
class SimulationResult:
    final_state: TrafficState
    costs: np.ndarray  # vehicle-hours per ramp section (road + queue)
    out_flow: np.ndarray  # veh/h leaving the last cell, per step

    @property
    def total_cost(self) -> float:
        return float(self.costs.sum())


def simulate_profile(
    spec: FreewaySpec,
    demand: DemandProfile,
    profile: Sequence[int] | None,
    gains: MeteringGains | None = None,
    start: TrafficState | None = None,
) -> SimulationResult:
    """Full-horizon run under one policy profile and one demand day.

    profile None pins every meter at the maximum rate (no metering);
    otherwise entries are per-ramp indices into ("LOC", "COR").
    """
    g = gains or MeteringGains()
    demand.validate_for(spec)
    if profile is None:
        actions = np.full(spec.n_ramps, ACTION_NO_METERING, dtype=np.int64)
    else:
        if len(profile) != spec.n_ramps:
            raise ConfigError(
                f"profile has {len(profile)} actions for {spec.n_ramps} ramps"
            )
        if any(a not in (ACTION_LOC, ACTION_COR) for a in profile):
            raise ConfigError(f"profile entries must be 0 or 1, got {tuple(profile)!r}")
        actions = np.array(profile, dtype=np.int64)
    state = start or initial_state(spec, g)
    final, costs, out_flow = _run(
        spec, demand.mainline, demand.ramp_arrivals, actions, g, state, spec.horizon
    )
    return SimulationResult(final_state=final, costs=costs, out_flow=out_flow)


@dataclass(frozen=True)
class Calibration:
    """Per-ramp cost normalisation bounds for the utility map."""

    cost_max: np.ndarray
    cost_min: np.ndarray

    def utilities(self, costs: np.ndarray) -> np.ndarray:
        span = self.cost_max - self.cost_min
        out = np.empty_like(costs)
        for i, cost in enumerate(costs):
            if span[i] <= 1e-12:
                out[i] = UTILITY_CEILING
            else:
                out[i] = (self.cost_max[i] - cost) / span[i]
        return np.clip(out, 0.0, UTILITY_CEILING)


def calibrate(
    spec: FreewaySpec,
    demands: Sequence[DemandProfile],
    gains: MeteringGains | None = None,
) -> Calibration:
    """Normalisation bounds: worst no-metering day against zero demand."""
    if spec.n_ramps == 0:
        raise ConfigError("calibration needs at least one ramp")
    if not demands:
        raise ConfigError("calibration needs at least one demand day")
    g = gains or MeteringGains()
    cost_max = np.zeros(spec.n_ramps)
    for demand in demands:
        result = simulate_profile(spec, demand, None, g)
        cost_max = np.maximum(cost_max, result.costs)
    empty = DemandProfile(
        name="calibration-empty",
        mainline=np.zeros(spec.horizon),
        ramp_arrivals=np.zeros((spec.horizon, spec.n_ramps)),
    )
    cost_min = simulate_profile(spec, empty, None, g).costs.copy()
    return Calibration(cost_max=cost_max, cost_min=cost_min)


def evaluate_profile(
    spec: FreewaySpec,
    demand: DemandProfile,
    profile: Sequence[int],
    calibration: Calibration,
    gains: MeteringGains | None = None,
) -> np.ndarray:
    """Per-ramp utilities in [0, 1) for one profile under one day."""
    result = simulate_profile(spec, demand, profile, gains)
    return calibration.utilities(result.costs)


def build_traffic_game(
    spec: FreewaySpec,
    demands: Sequence[DemandProfile],
    gains: MeteringGains | None = None,
    calibration: Calibration | None = None,
    max_ramps: int = MAX_TRAFFIC_AGENTS,
    cache: str | Path | None = None,
) -> Game:
    """Tabulate every profile under every day into a learnable Game.

    Tabulation costs 2**n_ramps simulation runs per day, so `cache`
    names a JSON file to reuse: if it exists it is loaded and returned
    without simulating, otherwise the freshly built game is saved there.
    """
    if cache is not None and Path(cache).exists():
        return load_game(str(cache))
    n_ramps = spec.n_ramps
    if n_ramps == 0:
        raise ConfigError("a traffic game needs at least one ramp")
    if n_ramps > max_ramps:
        raise GameFormatError(
            f"{n_ramps} ramps exceed the tabulation cap of {max_ramps} "
            f"({2 ** n_ramps} profiles)"
        )
    if not demands:
        raise ConfigError("a traffic game needs at least one demand day")
    names = [d.name for d in demands]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate demand day names: {names!r}")
    g = gains or MeteringGains()
    cal = calibration or calibrate(spec, demands, g)
    n_profiles = 2**n_ramps
    utilities = np.empty((n_ramps, n_profiles, len(demands)))
    for p in range(n_profiles):
        # agent 0 owns the most significant bit, matching Game stride order
        profile = tuple((p >> (n_ramps - 1 - j)) & 1 for j in range(n_ramps))
        for w, demand in enumerate(demands):
            utilities[:, p, w] = evaluate_profile(spec, demand, profile, cal, g)
    game = Game(
        agents=tuple(f"ramp{j + 1:02d}" for j in range(n_ramps)),
        actions=tuple(ACTION_NAMES for _ in range(n_ramps)),
        disturbances=tuple(names),
        disturbance_probs=tuple(1.0 / len(demands) for _ in demands),
        utilities=utilities,
    )
    if cache is not None:
        save_game(game, str(cache))
    return game


def load_freeway(path: str | Path) -> FreewaySpec:
    """Read a freeway document; see data/freeway03.json for the shape."""
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    try:
        cells = doc["cells"]
        ramps = doc.get("ramps", [])
        return FreewaySpec(
            cell_lengths=tuple(float(c["length"]) for c in cells),
            free_flow_speed=tuple(float(c["free_flow_speed"]) for c in cells),
            wave_speed=tuple(float(c["wave_speed"]) for c in cells),
            jam_density=tuple(float(c["jam_density"]) for c in cells),
            critical_density=tuple(float(c["critical_density"]) for c in cells),
            capacity=tuple(float(c["capacity"]) for c in cells),
            capacity_drop_rate=tuple(float(c["capacity_drop_rate"]) for c in cells),
            ramp_cells=tuple(int(r["cell"]) for r in ramps),
            ramp_lengths=tuple(float(r["length"]) for r in ramps),
            step=float(doc["step"]),
            horizon=int(doc["horizon"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{p}: malformed freeway document: {exc}") from exc


def load_demands(path: str | Path) -> tuple[DemandProfile, ...]:
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    try:
        days = []
        for day in doc["days"]:
            mainline = np.array(day["mainline"], dtype=np.float64)
            ramp_rows = day["ramps"]  # one horizon-long series per ramp
            if ramp_rows:
                arrivals = np.array(ramp_rows, dtype=np.float64).T
            else:
                arrivals = np.zeros((mainline.shape[0], 0))
            days.append(
                DemandProfile(
                    name=str(day["name"]),
                    mainline=mainline,
                    ramp_arrivals=arrivals,
                )
            )
        return tuple(days)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{p}: malformed demand document: {exc}") from exc
