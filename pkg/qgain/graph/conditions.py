"""Conditional routing logic for the qgain run graph."""

import logging
from typing import Literal

from ..errors import NumericError
from .state import RunState

logger = logging.getLogger(__name__)


def config_is_valid(state: RunState) -> Literal["plan_moments", "analyze_error"]:
    """Route on the outcome of config validation."""

    valid = state.get("run_config") is not None

    logger.info(f"🔀 CONFIG_IS_VALID: {valid}")

    if valid:
        logger.info("   → plan_moments")
        return "plan_moments"
    logger.info("   → analyze_error")
    return "analyze_error"


def cache_status(state: RunState) -> Literal["execute_command", "compute_moments", "analyze_error"]:
    """Skip computation when every planned table came from the cache."""

    if state.get("exception") is not None:
        logger.info("🔀 CACHE_STATUS: lookup failed")
        logger.info("   → analyze_error")
        return "analyze_error"

    pending = len(state.get("pending", []))
    logger.info(f"🔀 CACHE_STATUS: {pending} table(s) missing")

    if pending:
        logger.info("   → compute_moments")
        return "compute_moments"
    logger.info("   → execute_command")
    return "execute_command"


def moments_computed(state: RunState) -> Literal["check_moments", "analyze_error"]:
    """Computation errors (bad λ, too few samples) are not retried."""

    failed = state.get("exception") is not None

    logger.info(f"🔀 MOMENTS_COMPUTED: failed={failed}")

    if failed:
        logger.info("   → analyze_error")
        return "analyze_error"
    logger.info("   → check_moments")
    return "check_moments"


def moments_valid(state: RunState) -> Literal["execute_command", "refine_moments", "analyze_error"]:
    """Refine and recompute invalid tables until the attempts run out."""

    valid = state.get("moments_valid", False)
    attempt = state.get("attempt", 1)
    max_attempts = state.get("max_attempts", 2)

    logger.info(f"🔀 MOMENTS_VALID: valid={valid}, attempt={attempt}/{max_attempts}")

    if valid:
        logger.info("   → execute_command")
        return "execute_command"
    if not isinstance(state.get("exception"), NumericError) or attempt > max_attempts:
        logger.info("   → analyze_error")
        return "analyze_error"
    logger.info("   → refine_moments")
    return "refine_moments"


def command_succeeded(state: RunState) -> Literal["persist_artifacts", "analyze_error"]:
    """Route on the outcome of the command."""

    succeeded = state.get("result") is not None and state.get("exception") is None

    logger.info(f"🔀 COMMAND_SUCCEEDED: {succeeded}")

    if succeeded:
        logger.info("   → persist_artifacts")
        return "persist_artifacts"
    logger.info("   → analyze_error")
    return "analyze_error"


def artifacts_written(state: RunState) -> Literal["end", "analyze_error"]:
    """A failed write still gets an error analysis and exit code."""

    success = state.get("success", False)

    logger.info(f"🔀 ARTIFACTS_WRITTEN: {success}")

    if success:
        logger.info("   → end")
        return "end"
    logger.info("   → analyze_error")
    return "analyze_error"
