"""State definition for the qgain run graph."""

from typing import Any, Dict, List, Optional, Tuple, TypedDict, Union

from ..commands import CommandResult, MomentRequest
from ..config import RunConfig
from ..tools.order_stats import MomentTable


class RunState(TypedDict, total=False):
    """State maintained throughout one command run."""

    config: Union[str, Dict[str, Any]]
    overrides: Dict[str, Any]
    run_config: Optional[RunConfig]
    requests: List[MomentRequest]
    moments: Dict[Tuple[int, bool], MomentTable]
    pending: List[MomentRequest]
    computed: List[MomentTable]
    moments_valid: bool
    attempt: int
    max_attempts: int
    previous_errors: List[str]
    refinement: int
    result: Optional[CommandResult]
    artifacts: List[str]
    exception: Optional[BaseException]
    execution_error: Optional[str]
    error_analysis: Optional[Dict[str, Any]]
    exit_code: int
    success: bool
    formatted_result: Optional[Dict[str, Any]]
