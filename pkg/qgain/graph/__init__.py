"""Graph components for the qgain run pipeline."""

from .state import RunState
from .nodes import (
    validate_config,
    plan_moments,
    compute_moments,
    check_moments,
    refine_moments,
    execute_command,
    persist_artifacts,
    analyze_error,
)
from .conditions import (
    config_is_valid,
    cache_status,
    moments_computed,
    moments_valid,
    command_succeeded,
    artifacts_written,
)
from .workflow import TrackedWorkflow, build_graph, create_graph, run

__all__ = [
    "RunState",
    "validate_config",
    "plan_moments",
    "compute_moments",
    "check_moments",
    "refine_moments",
    "execute_command",
    "persist_artifacts",
    "analyze_error",
    "config_is_valid",
    "cache_status",
    "moments_computed",
    "moments_valid",
    "command_succeeded",
    "artifacts_written",
    "TrackedWorkflow",
    "build_graph",
    "create_graph",
    "run",
]
