"""Exception hierarchy shared by the tools, the run graph and the CLI."""

from typing import Dict, List, Optional


class QGainError(Exception):
    """Base class for every error raised by qgain."""


class ConfigValidationError(QGainError):
    """A run configuration violates its schema.

    Args:
        message: Summary line
        diagnostics: One entry per offending field, e.g. {"field": "lambda", "problem": "must be >= 1"}
    """

    def __init__(self, message: str, diagnostics: Optional[List[Dict[str, str]]] = None):
        self.diagnostics = diagnostics or []
        details = "; ".join(
            f"{d.get('field', '?')}: {d.get('problem', '')}" for d in self.diagnostics
        )
        super().__init__(f"{message} ({details})" if details else message)


class ExperimentBudgetError(QGainError):
    """An experiment grid would exceed the configured step budget."""

    def __init__(self, estimated_steps: float, budget: float):
        self.estimated_steps = estimated_steps
        self.budget = budget
        super().__init__(
            f"Experiment needs ~{estimated_steps:.3g} candidate evaluations, "
            f"budget is {budget:.3g}. Raise step_budget or enable full_scale."
        )


class WeightError(QGainError, ValueError):
    """Recombination weights cannot be built from the given inputs."""


class MomentError(QGainError, ValueError):
    """Invalid λ, quadrature settings below the accuracy floor, or too few samples."""


class NumericError(QGainError):
    """A numerical computation failed or produced an inconsistent result."""


class SingularSystemError(NumericError):
    """The linear system for the optimal weights is (numerically) singular."""

    def __init__(self, message: str, condition: float):
        self.condition = condition
        super().__init__(f"{message} (condition estimate {condition:.3e})")


class ZeroGradientError(NumericError):
    """The gradient vanishes at the mean, so σ̄ is undefined."""


class NonFiniteValueError(NumericError):
    """An objective value or mean vector became NaN or infinite."""


class BoundViolationError(NumericError):
    """A simulated quality gain fell outside the theoretical error bound."""


class CacheError(QGainError):
    """Moment cache could not be read or written."""


class CacheFormatError(CacheError):
    """Cache file has a bad magic number or truncated payload."""


class CacheVersionError(CacheError):
    """Cache file was written by an incompatible format version."""

    def __init__(self, found: int, expected: int, path: str = ""):
        self.found = found
        self.expected = expected
        super().__init__(
            f"Cache format version {found} != supported {expected}"
            + (f" in {path}" if path else "")
            + ". Delete the file or recompute with a different key."
        )


class CovarianceError(QGainError, ValueError):
    """A sampling covariance is not symmetric positive definite."""


class ModelError(QGainError, ValueError):
    """A quadratic model specification is invalid."""


class TheoryError(QGainError, ValueError):
    """Theory inputs are inconsistent or lack required moments."""


class SimulationError(QGainError, ValueError):
    """An ES run or quality gain estimate was requested with invalid settings."""
