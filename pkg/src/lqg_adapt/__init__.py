"""Adaptive LQG control of unknown partially observed systems with FIM-gated exploration."""

from .adaptive_loop import AlgoConfig, EpisodeSchedule, RunTrace, regret, run_full
from .errors import LqgAdaptError
from .filtering import compute_gains, optimal_cost
from .plant import CostParams, NoiseParams, SystemParams

__all__ = [
    "AlgoConfig", "CostParams", "EpisodeSchedule", "LqgAdaptError", "NoiseParams", "RunTrace",
    "SystemParams", "compute_gains", "optimal_cost", "regret", "run_full",
]
__version__ = "0.1.0"
