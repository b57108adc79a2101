"""Error analyzer mapping failures to an error type, an exit code and a suggested fix."""

from typing import Any, Dict, List, Optional, Union

from ..errors import (
    BoundViolationError,
    CacheError,
    CacheFormatError,
    CacheVersionError,
    ConfigValidationError,
    CovarianceError,
    ExperimentBudgetError,
    ModelError,
    MomentError,
    NonFiniteValueError,
    NumericError,
    SimulationError,
    SingularSystemError,
    TheoryError,
    WeightError,
    ZeroGradientError,
)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3

# most specific first
_TYPES = (
    (ConfigValidationError, "CONFIG_INVALID", EXIT_VALIDATION),
    (ExperimentBudgetError, "BUDGET_EXCEEDED", EXIT_VALIDATION),
    (WeightError, "INVALID_WEIGHTS", EXIT_VALIDATION),
    (MomentError, "INVALID_MOMENT_SETTINGS", EXIT_VALIDATION),
    (ModelError, "INVALID_MODEL", EXIT_VALIDATION),
    (CovarianceError, "INVALID_COVARIANCE", EXIT_VALIDATION),
    (TheoryError, "THEORY_PRECONDITION", EXIT_VALIDATION),
    (SimulationError, "INVALID_SIMULATION", EXIT_VALIDATION),
    (SingularSystemError, "SINGULAR_SYSTEM", EXIT_NUMERIC),
    (ZeroGradientError, "ZERO_GRADIENT", EXIT_NUMERIC),
    (NonFiniteValueError, "NON_FINITE", EXIT_NUMERIC),
    (BoundViolationError, "BOUND_VIOLATION", EXIT_NUMERIC),
    (NumericError, "NUMERIC_ERROR", EXIT_NUMERIC),
    (CacheVersionError, "CACHE_VERSION", EXIT_NUMERIC),
    (CacheFormatError, "CACHE_CORRUPT", EXIT_NUMERIC),
    (CacheError, "CACHE_ERROR", EXIT_NUMERIC),
)


class ErrorAnalyzer:
    """Analyzes qgain failures and provides context for fixing the run."""

    @staticmethod
    def analyze_error(error: Union[BaseException, str], command: str = "") -> Dict[str, Any]:
        """
        Analyze a failure and extract useful information.

        Args:
            error: The exception (or its message) raised while running
            command: The command that was running

        Returns:
            Dictionary containing error analysis
        """
        error_type = ErrorAnalyzer._classify_error(error)
        return {
            "error_type": error_type,
            "error_message": str(error),
            "suggested_fix": ErrorAnalyzer._suggest_fix(error_type),
            "exit_code": ErrorAnalyzer.exit_code(error),
            "problem_area": ErrorAnalyzer.extract_problem_area(error),
            "command": command,
        }

    @staticmethod
    def _classify_error(error: Union[BaseException, str]) -> str:
        """Classify the type of failure."""
        if isinstance(error, BaseException):
            for cls, name, _ in _TYPES:
                if isinstance(error, cls):
                    return name
            return "UNKNOWN_ERROR"

        error_lower = error.lower()
        if "invalid" in error_lower and "config" in error_lower:
            return "CONFIG_INVALID"
        elif "budget" in error_lower:
            return "BUDGET_EXCEEDED"
        elif "singular" in error_lower:
            return "SINGULAR_SYSTEM"
        elif "gradient is zero" in error_lower:
            return "ZERO_GRADIENT"
        elif "non-finite" in error_lower or "not finite" in error_lower:
            return "NON_FINITE"
        elif "cache" in error_lower:
            return "CACHE_ERROR"
        else:
            return "UNKNOWN_ERROR"

    @staticmethod
    def exit_code(error: Union[BaseException, str]) -> int:
        if isinstance(error, BaseException):
            for cls, _, code in _TYPES:
                if isinstance(error, cls):
                    return code
            return EXIT_INTERNAL
        error_type = ErrorAnalyzer._classify_error(error)
        for _, name, code in _TYPES:
            if name == error_type:
                return code
        return EXIT_INTERNAL

    @staticmethod
    def _suggest_fix(error_type: str) -> str:
        """Provide a suggestion for fixing the failure."""
        suggestions = {
            "CONFIG_INVALID": "Fix the listed fields; run `qgain <command> --help` for accepted keys and ranges.",
            "BUDGET_EXCEEDED": "Shrink the grid (fewer cells, smaller N or T), raise QGAIN_STEP_BUDGET, or pass --full-scale.",
            "INVALID_WEIGHTS": "Weights must be sorted non-increasing with Σ|w| = 1; truncation needs 1 ≤ μ ≤ λ.",
            "INVALID_MOMENT_SETTINGS": "Use λ ≥ 1, at least 10⁴ Monte-Carlo samples and a quadrature grid covering [-10, 10].",
            "INVALID_MODEL": "Check the spectrum type, dim and alpha of the model.",
            "INVALID_COVARIANCE": "The covariance must be symmetric positive definite.",
            "THEORY_PRECONDITION": "Request product moments (--e2) or allow the large-λ approximation.",
            "INVALID_SIMULATION": "σ̄ must be positive and reps at least 10³.",
            "SINGULAR_SYSTEM": "The optimal-weight system is ill-conditioned; lower λ or increase the Monte-Carlo samples.",
            "ZERO_GRADIENT": "The mean sits at the optimum; start from a different point.",
            "NON_FINITE": "Values overflowed; use a smaller σ̄ or enable rescaling of long runs.",
            "BOUND_VIOLATION": "A cell fell outside the error bound; rerun with more reps to rule out Monte-Carlo noise.",
            "NUMERIC_ERROR": "Inspect the logged residuals and tolerances.",
            "CACHE_VERSION": "The cache file was written by another format version; delete it to recompute.",
            "CACHE_CORRUPT": "The cache file is damaged; delete it to recompute.",
            "CACHE_ERROR": "Check permissions of the cache directory (--cache-dir or QGAIN_CACHE_DIR) and stale .lock files.",
        }
        return suggestions.get(error_type, "Review the error message and the logged run configuration.")

    @staticmethod
    def extract_problem_area(error: Union[BaseException, str]) -> Optional[str]:
        """
        Point at the specific input behind the failure when identifiable.

        Returns:
            A short description, None otherwise
        """
        if isinstance(error, ConfigValidationError) and error.diagnostics:
            return "Fields: " + ", ".join(d.get("field", "?") for d in error.diagnostics)
        if isinstance(error, SingularSystemError):
            return f"Condition number: {error.condition:.3e}"
        if isinstance(error, CacheVersionError):
            return f"Cache version {error.found}, expected {error.expected}"
        if isinstance(error, ExperimentBudgetError):
            return f"Estimated {error.estimated_steps:.3g} vs budget {error.budget:.3g}"
        return None

    @staticmethod
    def format_error_report(error: Union[BaseException, str], command: str, previous_errors: List[str]) -> str:
        """
        Format error information for the run log.

        Args:
            error: Current failure
            command: The command that failed
            previous_errors: Messages of earlier failed attempts in the same run
        """
        analysis = ErrorAnalyzer.analyze_error(error, command)
        report = f"""
Command Failed: {command}

Error Type: {analysis['error_type']}
Error Message: {analysis['error_message']}
"""
        if analysis["problem_area"]:
            report += f"Problem Area: {analysis['problem_area']}\n"
        report += f"Suggestion: {analysis['suggested_fix']}\n"

        if previous_errors:
            report += f"\nPrevious Attempts: {len(previous_errors)}\n"
            for i, prev_error in enumerate(previous_errors[-2:], 1):
                report += f"{i}. {prev_error}\n"
        return report
