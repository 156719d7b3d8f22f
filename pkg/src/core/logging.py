"""Structured logging configuration for stagfv.

Mesh generation, solves and convergence studies log named events with
numeric context (sizes, iteration counts, residuals, rates). Records are
written to stderr so tables and CSV on stdout stay byte-deterministic.
"""

from __future__ import annotations

import logging
import os
import sys
from enum import Enum
from typing import Any

import numpy as np
import structlog

from src import __version__


class EventType(str, Enum):
    """Standardized event types for log correlation."""

    # Mesh lifecycle
    MESH_GENERATED = "mesh_generated"
    MESH_VALIDATED = "mesh_validated"
    MESH_VALIDATION_FAILED = "mesh_validation_failed"
    MESH_LOADED = "mesh_loaded"
    MESH_SAVED = "mesh_saved"
    CENTER_REDRAW_EXHAUSTED = "center_redraw_exhausted"

    # Linear solves
    SOLVE_STARTED = "solve_started"
    SOLVE_COMPLETED = "solve_completed"
    SOLVER_NOT_CONVERGED = "solver_not_converged"

    # Convergence studies
    STUDY_STARTED = "study_started"
    STUDY_LEVEL_COMPLETED = "study_level_completed"
    STUDY_COMPLETED = "study_completed"
    IDENTITY_SUITE_COMPLETED = "identity_suite_completed"

    # System
    CONFIG_LOADED = "config_loaded"


def add_run_context(
    logger: structlog.types.WrappedLogger,
    method_name: str,
    event_dict: dict[str, Any],
) -> dict[str, Any]:
    """Add package version and run identifier to log events."""
    event_dict["stagfv_version"] = __version__
    event_dict["run_id"] = os.environ.get("STAGFV_RUN_ID", "local")
    return event_dict


def plain_numbers(
    logger: structlog.types.WrappedLogger,
    method_name: str,
    event_dict: dict[str, Any],
) -> dict[str, Any]:
    """Turn numpy scalars and small arrays into builtins.

    ``np.int64`` is not an ``int`` and would otherwise reach the JSON
    renderer as its repr. Arrays longer than 8 entries are summarized.
    """
    for key, value in event_dict.items():
        if isinstance(value, np.generic):
            event_dict[key] = value.item()
        elif isinstance(value, np.ndarray):
            if value.size <= 8:
                event_dict[key] = value.tolist()
            else:
                event_dict[key] = f"array(shape={value.shape}, dtype={value.dtype})"
    return event_dict


def configure_logging(
    json_logs: bool | None = None,
    log_level: str = "INFO",
) -> None:
    """Configure structured logging for the application.

    Args:
        json_logs: Whether to output JSON logs. Defaults to ``STAGFV_LOG_JSON``.
        log_level: Minimum level name; unknown names fall back to INFO.
    """
    if json_logs is None:
        json_logs = os.environ.get("STAGFV_LOG_JSON", "false").lower() == "true"

    renderer: structlog.types.Processor
    if json_logs:
        renderer = structlog.processors.JSONRenderer()
    else:
        renderer = structlog.dev.ConsoleRenderer(
            colors=False,
            exception_formatter=structlog.dev.plain_traceback,
        )

    level = logging.getLevelNamesMapping().get(log_level.upper(), logging.INFO)

    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso", utc=True),
            add_run_context,
            plain_numbers,
            structlog.processors.StackInfoRenderer(),
            renderer,
        ],
        wrapper_class=structlog.make_filtering_bound_logger(level),
        context_class=dict,
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=False,
    )


def get_logger(name: str | None = None) -> structlog.stdlib.BoundLogger:
    """Get a logger that resolves the configuration on every call.

    Module-level loggers therefore follow later ``configure_logging`` calls.
    """
    if name:
        return structlog.get_logger(logger_name=name)
    return structlog.get_logger()


def log_solver_event(event_type: str | EventType, **kwargs: Any) -> None:
    """Log a standardized solver event at INFO.

    Example:
        log_solver_event(
            EventType.SOLVE_COMPLETED,
            n=4096,
            iterations=212,
            relative_residual=8.1e-13,
        )
    """
    if isinstance(event_type, EventType):
        event_type = event_type.value
    get_logger("solver").info(event_type, **kwargs)


def log_error(event_type: str | EventType, error: Exception | str, **kwargs: Any) -> None:
    """Log an error event with the exception type and message."""
    if isinstance(event_type, EventType):
        event_type = event_type.value
    error_type = type(error).__name__ if isinstance(error, Exception) else "Error"
    get_logger("error").error(
        event_type, error_message=str(error), error_type=error_type, **kwargs
    )


class LogContext:
    """Bind context (command, study, level) for every record in a block.

    Example:
        with LogContext(study="converge_2d", level=3):
            log_solver_event(EventType.SOLVE_STARTED, n=1024)
    """

    def __init__(self, **context: Any) -> None:
        self.context = context

    def __enter__(self) -> LogContext:
        structlog.contextvars.bind_contextvars(**self.context)
        return self

    def __exit__(self, *args: Any) -> None:
        structlog.contextvars.unbind_contextvars(*self.context)
