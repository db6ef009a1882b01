"""Simulation of correlated test-time attacks on classifiers and dynamic defenses."""

from .analytics import (
    closed_form_expected_error_rate,
    compare,
    exact_expected_error_rate,
    expected_trials,
    naive_attack_error_rate,
    required_r,
    stochastic_asymptote,
    targeted_rate_approx,
)
from .config import ConfigError, ScenarioConfig, WorldSpec, load_scenario, parse_scenario
from .core import ABSTAIN, REJECTED, Metrics, Origin, Query, Response, ResponseKind, SeedSpec, compute_metrics
from .engine import MonteCarloSummary, batch_test_set_attack, monte_carlo, run_episode
from .world import ResponseProfile, StochasticProfiles, Stratum, WorldModel, build_world, natural_draw

__version__ = "0.1.0"

__all__ = [
    "ABSTAIN", "REJECTED", "ConfigError", "Metrics", "MonteCarloSummary", "Origin", "Query", "Response",
    "ResponseKind", "ResponseProfile", "ScenarioConfig", "SeedSpec", "StochasticProfiles", "Stratum",
    "WorldModel", "WorldSpec", "batch_test_set_attack", "build_world", "closed_form_expected_error_rate",
    "compare", "compute_metrics", "exact_expected_error_rate", "expected_trials", "load_scenario",
    "monte_carlo", "naive_attack_error_rate", "natural_draw", "parse_scenario", "required_r",
    "run_episode", "stochastic_asymptote", "targeted_rate_approx",
]
