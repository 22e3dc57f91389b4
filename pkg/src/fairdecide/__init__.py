"""Fairness-constrained decision rules, bias simulation and fairness audits."""
from .core import (
    ConfigError,
    ExplicitVector,
    GroupInterval,
    Individual,
    RandomizedBoundary,
    ScoredPopulation,
    ShapeError,
    UniformThreshold,
    UtilityMatrix,
    UtilityParams,
    apply_rule,
    derive_seed,
    expected_utility,
    within_group_fairness,
)
from .optimizer import ConstraintKind, InfeasibleError, SolveConfig, SolveResult, solve

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ConstraintKind", "ExplicitVector", "GroupInterval", "Individual",
    "InfeasibleError", "RandomizedBoundary", "ScoredPopulation", "ShapeError", "SolveConfig",
    "SolveResult", "UniformThreshold", "UtilityMatrix", "UtilityParams", "apply_rule", "derive_seed",
    "expected_utility", "solve", "within_group_fairness", "__version__",
]
