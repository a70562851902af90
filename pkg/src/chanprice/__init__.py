"""Stackelberg channel pricing and selection over a remote Kalman estimation loop."""

from .client_mdp import (
    ClientSolution,
    GameConfig,
    PriceSchedule,
    brute_force_oracle,
    check_superadditivity,
    extract_threshold,
    value_iteration,
)
from .errors import (
    ConfigurationError,
    ConsistencyError,
    ConvergenceError,
    ObservabilityWarning,
    SingularityError,
    StructuralPropertyError,
)
from .estimation import CovarianceLadder, SystemModel, build_ladder, steady_state
from .game_sim import SimConfig, SimResult, play_equilibrium, simulate, simulate_full_state
from .matrix_core import Matrix
from .server_pricing import (
    PriceLabel,
    ServerSolution,
    backward_thresholds,
    consistent_thresholds,
    discretize_policy,
    verify_leader_consistency,
)

__version__ = "0.1.0"

__all__ = [
    "ClientSolution", "GameConfig", "PriceSchedule", "brute_force_oracle", "check_superadditivity",
    "extract_threshold", "value_iteration",
    "ConfigurationError", "ConsistencyError", "ConvergenceError", "ObservabilityWarning",
    "SingularityError", "StructuralPropertyError",
    "CovarianceLadder", "SystemModel", "build_ladder", "steady_state",
    "SimConfig", "SimResult", "play_equilibrium", "simulate", "simulate_full_state",
    "Matrix",
    "PriceLabel", "ServerSolution", "backward_thresholds", "consistent_thresholds",
    "discretize_policy", "verify_leader_consistency",
]
