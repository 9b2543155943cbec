"""Minimum-information reactive policies for finite POMDPs."""

from .builtin import BUILTINS, builtin, robot, two_state
from .core import (
    ModelValidationError,
    PeriodicPomdpModel,
    PomdpModel,
    ReactivePolicy,
    check_policy,
    load_model,
    make_periodic,
    model_to_dict,
    validate_model,
    validate_periodic_model,
)
from .dynamics import compute_beliefs, ergodicity_check, external_cost, stationary_phase_distributions
from .estimator import BetaSweep, MinInfoPolicy
from .information import InfoBreakdown, free_energy, information_costs, kl_divergence, marginal_policy
from .reduction import (
    RetentiveSetup,
    build_reduced_pomdp,
    check_equivalence,
    embed_retentive_policy,
    random_setup,
)
from .simulator import crosscheck, rollout
from .solver import SolverOptions, SolverReport, evaluate_state, policy_update, residuals, solve
from .sweep import detect_bifurcations, log_grid, refine_bifurcation, sweep

__version__ = "0.1.0"

__all__ = [
    "BUILTINS", "BetaSweep", "InfoBreakdown", "MinInfoPolicy", "ModelValidationError",
    "PeriodicPomdpModel", "PomdpModel", "ReactivePolicy", "RetentiveSetup", "SolverOptions",
    "SolverReport", "build_reduced_pomdp", "builtin", "check_equivalence", "check_policy",
    "compute_beliefs", "crosscheck", "detect_bifurcations", "embed_retentive_policy",
    "ergodicity_check", "evaluate_state", "external_cost", "free_energy", "information_costs",
    "kl_divergence", "load_model", "log_grid", "make_periodic", "marginal_policy", "model_to_dict",
    "policy_update", "random_setup", "refine_bifurcation", "residuals", "robot", "rollout", "solve",
    "stationary_phase_distributions", "sweep", "two_state", "validate_model", "validate_periodic_model",
]
