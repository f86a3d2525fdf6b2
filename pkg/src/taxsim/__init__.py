"""Agent-based tax evasion game with adaptive compliance on a small-world network."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    Category,
    InvalidParam,
    Params,
    PlayerState,
    Population,
    PopulationTooSmall,
    RunResult,
    initial_population,
    rng_stream,
    validate,
)
from .network import SocialGraph, Topology, build_graph, neighbors  # noqa: E402
from .harness import (  # noqa: E402
    classify_cipolla,
    find_critical_initial_fraction,
    run_adaptive,
    sweep_fraction,
    sweep_parameter,
)
