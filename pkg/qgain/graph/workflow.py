"""Build the LangGraph workflow that executes one qgain command."""

import logging
from contextlib import nullcontext
from pathlib import Path
from typing import Any, Dict, Optional, Union

from langgraph.graph import END, StateGraph

from ..tracking import end_tracking_session, start_tracking_session
from .conditions import (
    artifacts_written,
    cache_status,
    command_succeeded,
    config_is_valid,
    moments_computed,
    moments_valid,
)
from .nodes import (
    analyze_error,
    check_moments,
    compute_moments,
    execute_command,
    persist_artifacts,
    plan_moments,
    refine_moments,
    validate_config,
)
from .state import RunState

logger = logging.getLogger(__name__)


def build_graph():
    """Build and compile the qgain run graph."""

    logger.debug("🔧 Building LangGraph workflow...")

    workflow = StateGraph(RunState)

    workflow.add_node("validate_config", validate_config)
    workflow.add_node("plan_moments", plan_moments)
    workflow.add_node("compute_moments", compute_moments)
    workflow.add_node("check_moments", check_moments)
    workflow.add_node("refine_moments", refine_moments)
    workflow.add_node("execute_command", execute_command)
    workflow.add_node("persist_artifacts", persist_artifacts)
    workflow.add_node("analyze_error", analyze_error)

    workflow.set_entry_point("validate_config")

    workflow.add_conditional_edges(
        "validate_config",
        config_is_valid,
        {
            "plan_moments": "plan_moments",
            "analyze_error": "analyze_error",
        },
    )
    workflow.add_conditional_edges(
        "plan_moments",
        cache_status,
        {
            "execute_command": "execute_command",
            "compute_moments": "compute_moments",
            "analyze_error": "analyze_error",
        },
    )
    workflow.add_conditional_edges(
        "compute_moments",
        moments_computed,
        {
            "check_moments": "check_moments",
            "analyze_error": "analyze_error",
        },
    )
    workflow.add_conditional_edges(
        "check_moments",
        moments_valid,
        {
            "execute_command": "execute_command",
            "refine_moments": "refine_moments",
            "analyze_error": "analyze_error",
        },
    )
    workflow.add_edge("refine_moments", "compute_moments")
    workflow.add_conditional_edges(
        "execute_command",
        command_succeeded,
        {
            "persist_artifacts": "persist_artifacts",
            "analyze_error": "analyze_error",
        },
    )
    workflow.add_conditional_edges(
        "persist_artifacts",
        artifacts_written,
        {
            "end": END,
            "analyze_error": "analyze_error",
        },
    )
    workflow.add_edge("analyze_error", END)

    app = workflow.compile()

    logger.debug("✅ Workflow compiled successfully")

    return app


class TrackedWorkflow:
    """Wrapper that adds session tracking to the workflow."""

    def __init__(self, workflow):
        self.workflow = workflow

    def invoke(self, state: RunState) -> RunState:
        """Run the workflow with session tracking."""

        config = state.get("config")
        label = config if isinstance(config, str) else (config or {}).get("command", "?")

        logger.info("=" * 80)
        logger.info("🚀 QGAIN - Starting Workflow")
        logger.info("=" * 80)
        logger.info(f"📝 Config: {label}")

        session = start_tracking_session(
            operation_type="qgain_run",
            metadata={"config": str(label)[:200]},
        )

        try:
            with session.stage("graph") if session else nullcontext():
                result = self.workflow.invoke(state)

            success = result.get("success", False)
            error = None if success else result.get("execution_error")

            logger.info("=" * 80)
            logger.info("📊 WORKFLOW COMPLETE")
            logger.info("=" * 80)
            logger.info(f"✅ Success: {success}")
            logger.info(f"🔄 Moment refinements: {result.get('refinement', 0)}")
            if success:
                logger.info(f"📁 Artifacts: {len(result.get('artifacts', []))}")
            else:
                logger.warning(f"❌ Exit code: {result.get('exit_code')}")
                if result.get("previous_errors"):
                    logger.warning(f"   Errors encountered: {len(result['previous_errors'])}")

            end_tracking_session(session, success=success, error=error)
            return result

        except Exception as e:
            logger.error(f"❌ Workflow failed with exception: {e}")
            end_tracking_session(session, success=False, error=str(e))
            raise


def create_graph(cache_dir: Optional[Union[str, Path]] = None) -> TrackedWorkflow:
    """
    Create the compiled graph bound to a moment cache directory.

    Note: This replaces the module-level cache instance in nodes.py.
    """
    from . import nodes
    from ..tools.moment_cache import MomentCache

    nodes.cache = MomentCache(cache_dir)
    logger.debug(f"📦 Moment cache: {nodes.cache.cache_dir}")

    return TrackedWorkflow(build_graph())


def run(config: Union[str, Path, Dict[str, Any]], overrides: Optional[Dict[str, Any]] = None) -> RunState:
    """
    Execute one command end to end.

    Args:
        config: Path to a TOML/JSON config or a mapping
        overrides: Command-line values layered over the config

    Returns:
        Final state; ``exit_code`` is 0 on success, 2 for validation and 3 for numeric failures
    """
    overrides = dict(overrides or {})
    workflow = create_graph()
    source = str(config) if isinstance(config, Path) else config
    return workflow.invoke({"config": source, "overrides": overrides})
