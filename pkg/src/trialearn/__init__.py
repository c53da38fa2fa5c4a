"""trialearn: payoff-based trial-and-error learning in finite games.

Simulation of fully decentralised learning dynamics under i.i.d.
disturbances, plus exact finite-chain analysis (recurrence classes,
resistances, spanning in-tree potentials, stochastically stable states)
for desk-scale instances.
"""

from .errors import (
    ClassificationError,
    ConfigError,
    ConvergenceError,
    GameFormatError,
    TrialearnError,
    VerificationError,
)
from .games import (
    ActionProfile,
    Game,
    InterdependenceReport,
    RandomGameSpec,
    WelfareReport,
    check_interdependence,
    compute_rho,
    load_game,
    random_game,
    save_game,
    welfare,
    welfare_argmax,
)
from .learner import (
    CONTENT,
    DISCONTENT,
    AgentState,
    LearnerConfig,
    SplitMix64,
    SystemState,
    Trajectory,
    broadcast_moods,
    render_state,
    run,
    select_action,
    step,
    update_agent_state,
)

__version__ = "0.1.0"

__all__ = [
    "ActionProfile",
    "AgentState",
    "CONTENT",
    "ClassificationError",
    "ConfigError",
    "ConvergenceError",
    "DISCONTENT",
    "Game",
    "GameFormatError",
    "InterdependenceReport",
    "LearnerConfig",
    "RandomGameSpec",
    "SplitMix64",
    "SystemState",
    "Trajectory",
    "TrialearnError",
    "VerificationError",
    "WelfareReport",
    "broadcast_moods",
    "check_interdependence",
    "compute_rho",
    "load_game",
    "random_game",
    "render_state",
    "run",
    "save_game",
    "select_action",
    "step",
    "update_agent_state",
    "welfare",
    "welfare_argmax",
]
