"""Node functions for the qgain run graph."""

import json
import logging
import time
from pathlib import Path
from typing import Any, Dict, List

from ..commands import MomentRequest, execute, moment_requests
from ..config import Command, RunConfig, parse_config
from ..errors import NumericError
from ..tools.moment_cache import MomentCache, MomentKey
from ..tools.order_stats import MomentMethod, MomentValidator, QuadratureGrid, build_moment_table
from ..utils.error_analyzer import EXIT_OK, ErrorAnalyzer
from ..utils.plotting import plot_table
from ..utils.result_formatter import ResultFormatter, atomic_write_text
from .state import RunState

logger = logging.getLogger(__name__)

# Initialize tools
cache = MomentCache()
validator = MomentValidator()


def _command_name(state: RunState) -> str:
    cfg = state.get("run_config")
    if cfg is None:
        return "qgain"
    if cfg.command is Command.FIGURE:
        return f"figure {cfg.get('name')}"
    return cfg.command.value


def _failure(state: RunState, error: BaseException) -> Dict[str, Any]:
    previous_errors = state.get("previous_errors", [])
    return {
        "exception": error,
        "execution_error": str(error),
        "previous_errors": previous_errors + [str(error)],
        "success": False,
    }


def validate_config(state: RunState) -> Dict[str, Any]:
    """Parse and validate the raw config before anything is computed."""

    logger.info("=" * 80)
    logger.info("🔍 NODE 1: Validate Config")
    logger.info("=" * 80)

    updates: Dict[str, Any] = {}
    if "attempt" not in state:
        updates["attempt"] = 1
    if "previous_errors" not in state:
        updates["previous_errors"] = []
    if "refinement" not in state:
        updates["refinement"] = 0
    updates["success"] = False

    try:
        cfg = parse_config(state["config"], state.get("overrides"))
    except Exception as e:
        logger.warning(f"   ❌ Config rejected: {e}")
        return {**updates, **_failure({**state, **updates}, e), "run_config": None}

    if "max_attempts" not in state:
        updates["max_attempts"] = cfg.max_attempts
    global cache
    if cache.cache_dir != cfg.cache_dir:
        cache = MomentCache(cfg.cache_dir)
    logger.info(f"   Command: {_command_name({'run_config': cfg})}")
    logger.info(f"   Seed: {cfg.seed}  Output: {cfg.output_dir}")
    logger.info("   ✅ Config valid")
    return {**updates, "run_config": cfg, "exception": None, "execution_error": None}


def plan_moments(state: RunState) -> Dict[str, Any]:
    """Work out which moment tables the command reads and serve cache hits."""

    cfg: RunConfig = state["run_config"]

    logger.info("-" * 80)
    logger.info("📋 NODE 2: Plan Moments")
    logger.info("-" * 80)

    try:
        requests = moment_requests(cfg)
        moments = {}
        pending: List[MomentRequest] = []
        for request in requests:
            table = cache.lookup(request.key)
            if table is None:
                pending.append(request)
            else:
                moments[request.slot] = table
                if request.method is not MomentMethod.BLOM:
                    logger.debug(
                        f"   cache hit {request.key.filename()} served as stored; "
                        f"panels={cfg.panels} is not part of the cache key"
                    )
    except Exception as e:
        logger.error(f"   ❌ Cache lookup failed: {e}")
        return _failure(state, e)

    logger.info(f"   📊 {len(requests)} table(s) needed: {len(moments)} cached, {len(pending)} to compute")
    return {"requests": requests, "moments": moments, "pending": pending}


def compute_moments(state: RunState) -> Dict[str, Any]:
    """Compute every pending moment table with the current refinement level."""

    cfg: RunConfig = state["run_config"]
    pending = state.get("pending", [])
    refinement = state.get("refinement", 0)

    logger.info("-" * 80)
    logger.info(f"⚙️  NODE 3: Compute Moments (refinement {refinement})")
    logger.info("-" * 80)

    grid = QuadratureGrid(panels=cfg.panels * 2 ** refinement)
    computed = []
    start_time = time.time()
    try:
        for request in pending:
            logger.info(f"   λ={request.lam} {request.method.value}" + (f" samples={request.samples}" if request.samples else ""))
            computed.append(build_moment_table(
                request.lam,
                method=request.method,
                with_e2=request.with_e2,
                samples=request.samples or None,
                seed=request.seed if request.seed >= 0 else None,
                workers=cfg.workers,
                grid=grid,
            ))
    except Exception as e:
        logger.error(f"   ❌ FAILED after {time.time() - start_time:.1f}s: {e}")
        return {**_failure(state, e), "computed": []}

    logger.info(f"   ✅ {len(computed)} table(s) in {time.time() - start_time:.1f}s")
    return {"computed": computed, "exception": None, "execution_error": None}


def check_moments(state: RunState) -> Dict[str, Any]:
    """Validate freshly computed tables; valid ones go to the cache."""

    computed = state.get("computed", [])
    attempt = state.get("attempt", 1)

    logger.info("-" * 80)
    logger.info(f"✅ NODE 4: Check Moments (Attempt {attempt})")
    logger.info("-" * 80)

    problems = []
    for request, table in zip(state.get("pending", []), computed):
        is_valid, message = validator.validate(table)
        if not is_valid:
            problems.append(f"λ={request.lam}: {message}")

    if problems:
        for problem in problems:
            logger.warning(f"   ❌ {problem}")
        error = NumericError("Moment table failed validation: " + "; ".join(problems))
        return {**_failure(state, error), "moments_valid": False, "attempt": attempt + 1}

    moments = dict(state.get("moments", {}))
    try:
        for request, table in zip(state.get("pending", []), computed):
            cache.store(table)
            moments[request.slot] = table
    except Exception as e:
        logger.error(f"   ❌ Cache write failed: {e}")
        return {**_failure(state, e), "moments_valid": False}

    logger.info(f"   ✅ {len(computed)} table(s) valid and cached")
    return {"moments": moments, "pending": [], "moments_valid": True}


def refine_moments(state: RunState) -> Dict[str, Any]:
    """Double the quadrature panels and Monte-Carlo samples before recomputing."""

    refinement = state.get("refinement", 0) + 1

    logger.info("-" * 80)
    logger.info(f"🔧 NODE 5: Refine Moments (level {refinement})")
    logger.info("-" * 80)

    pending = [
        request._replace(samples=request.samples * 2) if request.method is MomentMethod.MONTE_CARLO else request
        for request in state.get("pending", [])
    ]
    for request in pending:
        logger.info(f"   λ={request.lam}: {request.key.filename()}")
    return {"pending": pending, "refinement": refinement}


def execute_command(state: RunState) -> Dict[str, Any]:
    """Run the command against the collected moment tables."""

    cfg: RunConfig = state["run_config"]

    logger.info("-" * 80)
    logger.info(f"🚀 NODE 6: Execute Command ({_command_name(state)})")
    logger.info("-" * 80)

    start_time = time.time()
    try:
        result = execute(cfg, state.get("moments", {}))
    except Exception as e:
        logger.error(f"   ❌ FAILED after {time.time() - start_time:.1f}s")
        logger.error(f"   Error: {str(e)[:200]}")
        return _failure(state, e)

    logger.info(f"   ✅ SUCCESS in {time.time() - start_time:.1f}s")
    logger.info(f"   📊 Rows: {len(result.primary)}")
    return {"result": result, "exception": None, "execution_error": None}


def persist_artifacts(state: RunState) -> Dict[str, Any]:
    """Write every result table atomically, with the effective config next to them."""

    cfg: RunConfig = state["run_config"]
    result = state["result"]

    logger.info("-" * 80)
    logger.info("💾 NODE 7: Persist Artifacts")
    logger.info("-" * 80)

    config = cfg.to_dict()
    out = Path(cfg.output_dir)
    written: List[Path] = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        written.append(atomic_write_text(
            out / "effective_config.json", json.dumps(config, indent=2, sort_keys=True, default=str) + "\n"
        ))
        for name, table in result.tables.items():
            written.append(ResultFormatter.write_csv(table, out / f"{name}.csv", config))
        for name, table in result.json_tables.items():
            written.append(ResultFormatter.write_json(table, out / f"{name}.json", config))
        if result.weights is not None:
            written.append(ResultFormatter.write_weights(result.weights, out / "weights.txt", config))
        for table in result.moment_exports:
            written.append(cache.write_text(table, out / MomentKey.for_table(table).filename(".csv")))
        if cfg.svg and result.figure:
            written.append(plot_table(result.figure, result.primary, out / f"{result.name}.svg"))
    except Exception as e:
        logger.error(f"   ❌ Writing artifacts failed: {e}")
        return {**_failure(state, e), "artifacts": [str(p) for p in written]}

    for path in written:
        logger.info(f"   📝 {path}")

    formatted = ResultFormatter.format_results(result.primary, _command_name(state), max_rows=20)
    formatted["summary"] = result.summary
    formatted["artifacts"] = [str(p) for p in written]

    logger.info("   ✅ Artifacts written")
    logger.info("=" * 80)
    return {
        "artifacts": [str(p) for p in written],
        "formatted_result": formatted,
        "success": True,
        "exit_code": EXIT_OK,
    }


def analyze_error(state: RunState) -> Dict[str, Any]:
    """Classify the failure into an error type, exit code and suggested fix."""

    error = state.get("exception") or state.get("execution_error") or "unknown failure"
    command = _command_name(state)

    logger.info("-" * 80)
    logger.info("🔍 NODE 8: Analyze Error")
    logger.info("-" * 80)

    analysis = ErrorAnalyzer.analyze_error(error, command)
    report = ErrorAnalyzer.format_error_report(error, command, state.get("previous_errors", [])[:-1])

    logger.info(f"   🧠 Error Type: {analysis['error_type']}")
    logger.info(f"   💡 Suggestion: {analysis['suggested_fix']}")
    if analysis["problem_area"]:
        logger.info(f"   🎯 Problem Area: {analysis['problem_area']}")
    logger.debug(report)
    logger.info("=" * 80)

    return {
        "error_analysis": analysis,
        "formatted_result": ResultFormatter.format_error(analysis, command),
        "exit_code": analysis["exit_code"],
        "success": False,
    }
