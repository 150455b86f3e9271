"""
Logging configuration for privquery.

Structured logging to stderr so that trace and table output on stdout stays
machine-readable. Trial and seed identifiers are bound through contextvars.
"""

import logging
import sys
from typing import Any, Dict, Optional

import structlog
from structlog.typing import FilteringBoundLogger

from privquery.core.config import settings


def setup_logging(level: Optional[str] = None, log_format: Optional[str] = None) -> None:
    """Configure structured logging for the application."""
    level_name = (level or settings.log_level).upper()
    fmt = log_format or settings.log_format

    structlog.configure(
        processors=[
            # Add trial context and timestamp
            structlog.contextvars.merge_contextvars,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.add_logger_name,
            structlog.processors.add_log_level,
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,

            # Format for JSON or console output
            structlog.processors.JSONRenderer() if fmt == "json"
            else structlog.dev.ConsoleRenderer(colors=settings.debug),
        ],
        context_class=dict,
        logger_factory=structlog.WriteLoggerFactory(file=sys.stderr),
        wrapper_class=structlog.make_filtering_bound_logger(
            getattr(logging, level_name)
        ),
        cache_logger_on_first_use=True,
    )

    logging.basicConfig(
        format="%(message)s",
        stream=sys.stderr,
        level=getattr(logging, level_name),
    )


def bind_trial_context(**kwargs: Any) -> None:
    """Attach identifiers (trial, seed, stage) to every subsequent log line."""
    structlog.contextvars.bind_contextvars(**kwargs)


def clear_trial_context() -> None:
    structlog.contextvars.clear_contextvars()


class TrialLogger:
    """Logger for trial lifecycle and engine events."""

    def __init__(self) -> None:
        self.logger = structlog.get_logger("trial")

    def log_trial_started(self, trial: int, mode: str, seed: int, **kwargs: Any) -> None:
        """Log trial start."""
        self.logger.info("Trial started", trial=trial, mode=mode, seed=seed, **kwargs)

    def log_trial_completed(
        self,
        trial: int,
        avg_error: float,
        excess: float,
        halted_at: Optional[int],
        execution_time: float,
        **kwargs: Any,
    ) -> None:
        """Log trial completion."""
        self.logger.info(
            "Trial completed",
            trial=trial,
            avg_error=avg_error,
            excess=excess,
            halted_at=halted_at,
            execution_time=execution_time,
            **kwargs,
        )

    def log_stage(self, stage: str, **kwargs: Any) -> None:
        """Log a pipeline stage boundary."""
        self.logger.debug("Pipeline stage", stage=stage, **kwargs)

    def log_engine_halted(self, query_index: int, unstable_count: int, budget: int, **kwargs: Any) -> None:
        """Log the sparse-vector budget running out."""
        self.logger.info(
            "Engine halted",
            query_index=query_index,
            unstable_count=unstable_count,
            budget=budget,
            **kwargs,
        )


class NoiseLogger:
    """Logger for individual noise draws, enabled by ``trace_noise``."""

    def __init__(self) -> None:
        self.logger = structlog.get_logger("noise")

    @property
    def enabled(self) -> bool:
        return settings.trace_noise

    def log_draw(self, kind: str, scale: float, value: float, **kwargs: Any) -> None:
        if self.enabled:
            self.logger.debug("Noise draw", kind=kind, scale=scale, value=value, **kwargs)


# Global logger instances
trial_logger = TrialLogger()
noise_logger = NoiseLogger()


def get_logger(name: str) -> FilteringBoundLogger:
    """Get a structured logger instance."""
    return structlog.get_logger(name)


def log_exception(
    logger: FilteringBoundLogger,
    exception: Exception,
    context: Optional[Dict[str, Any]] = None,
    **kwargs: Any,
) -> None:
    """Log exception with structured context."""
    logger.error(
        f"Exception occurred: {type(exception).__name__}",
        error_message=str(exception),
        error_type=type(exception).__name__,
        context=context or {},
        **kwargs,
        exc_info=settings.debug,
    )
