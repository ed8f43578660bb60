"""Peak and per-packet Age of Information for energy-harvesting multiple-access
networks with sleep scheduling: closed forms, a simulation oracle and solvers.
"""
__version__ = "0.1.0"

from .core import (
    ConfigError,
    DecisionVector,
    Policy,
    Protocol,
    SystemConfig,
    UnstableQueueError,
    default_config,
    load_config,
    validate_config,
)
from .opt import ProblemInfeasible, build_problem, ccp_solve, exact_linear_search, solve
from .queueing import QueueParams, peak_aoi_mv, peak_aoi_st, protocol_peak_aoi
from .sim import SimSpec, simulate

__all__ = [
    "ConfigError", "DecisionVector", "Policy", "Protocol", "SystemConfig",
    "UnstableQueueError", "default_config", "load_config", "validate_config",
    "ProblemInfeasible", "build_problem", "ccp_solve", "exact_linear_search", "solve",
    "QueueParams", "peak_aoi_mv", "peak_aoi_st", "protocol_peak_aoi",
    "SimSpec", "simulate",
]
