"""
Run tracking: one session per workflow invocation.

Sessions time the run and its stages and log a summary when they end. Set
QGAIN_TRACKING=0 to disable them.
"""

import logging
import os
import time
import uuid
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, Optional

logger = logging.getLogger(__name__)

PROJECT_NAME = "qgain"
TRACKING_ENABLED = os.getenv("QGAIN_TRACKING", "1") != "0"


@dataclass
class TrackingSession:
    operation_type: str
    metadata: Dict[str, Any] = field(default_factory=dict)
    session_id: str = field(default_factory=lambda: uuid.uuid4().hex[:8])
    started: float = field(default_factory=time.perf_counter)
    success: bool = True
    error: Optional[str] = None
    duration_s: Optional[float] = None
    stages: Dict[str, float] = field(default_factory=dict)

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        """Accumulate wall time spent in a named stage."""
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.stages[name] = self.stages.get(name, 0.0) + time.perf_counter() - t0


def start_tracking_session(operation_type: str, metadata: Optional[Dict[str, Any]] = None) -> Optional[TrackingSession]:
    """
    Start a tracking session for an operation.

    Args:
        operation_type: Type of operation (e.g., "figure", "bound-check")
        metadata: Optional metadata to store with the session

    Returns:
        Session object (pass this to end_tracking_session), None when tracking is off
    """
    if not TRACKING_ENABLED:
        return None
    session = TrackingSession(operation_type, dict(metadata or {}))
    logger.debug(f"[{PROJECT_NAME}] session {session.session_id} started: {operation_type} {session.metadata}")
    return session


def end_tracking_session(
    session: Optional[TrackingSession],
    success: bool = True,
    error: Optional[str] = None,
) -> Optional[TrackingSession]:
    """
    End a tracking session and log its summary.

    Args:
        session: Session object from start_tracking_session
        success: Whether the operation succeeded
        error: Error message if operation failed
    """
    if not session:
        return None
    session.success = success
    session.error = error
    session.duration_s = time.perf_counter() - session.started

    stages = ", ".join(f"{name}={seconds:.2f}s" for name, seconds in session.stages.items())
    status = "ok" if success else f"failed ({error})"
    logger.info(
        f"⏱️  [{PROJECT_NAME}] {session.operation_type} {status} in {session.duration_s:.2f}s"
        + (f" [{stages}]" if stages else "")
    )
    return session
