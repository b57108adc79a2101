"""Computational tools: order statistics, weights, quadratic models, theory, simulation."""

from .order_stats import MomentMethod, MomentTable, MomentValidator, build_moment_table
from .weights import LipschitzConstants, WeightVector, make_weights
from .quadratic import QuadraticModel, make_model
from .theory import TheoryInputs, error_bound, predict, sigma_bar_star_general
from .es_core import EsState, run_scale_invariant, one_step_quality_gain_mc
from .experiments import ExperimentConfig, fig1_data, fig2_data, fig3_data, fig56_data, bound_check
from .moment_cache import MomentCache, MomentKey, cache_roundtrip

__all__ = [
    "MomentMethod",
    "MomentTable",
    "MomentValidator",
    "build_moment_table",
    "LipschitzConstants",
    "WeightVector",
    "make_weights",
    "QuadraticModel",
    "make_model",
    "TheoryInputs",
    "error_bound",
    "predict",
    "sigma_bar_star_general",
    "EsState",
    "run_scale_invariant",
    "one_step_quality_gain_mc",
    "ExperimentConfig",
    "fig1_data",
    "fig2_data",
    "fig3_data",
    "fig56_data",
    "bound_check",
    "MomentCache",
    "MomentKey",
    "cache_roundtrip",
]
