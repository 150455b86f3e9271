"""
Custom exceptions for privquery.

Every failure raised by the library derives from ``PrivQueryException`` and
carries a stable error code plus structured details, so the CLI can report
it and map it to an exit status.
"""

from typing import Any, Dict, NoReturn, Optional

import structlog

logger = structlog.get_logger(__name__)

# CLI exit statuses
EXIT_OK = 0
EXIT_VERIFICATION_FAILED = 1
EXIT_ERROR = 2


class PrivQueryException(Exception):
    """Base exception for all library-specific errors."""

    def __init__(
        self,
        message: str,
        error_code: str = "GENERAL_ERROR",
        details: Optional[Dict[str, Any]] = None,
    ):
        self.message = message
        self.error_code = error_code
        self.details = details or {}
        super().__init__(self.message)

    def to_dict(self) -> Dict[str, Any]:
        """Structured form used in logs and error reports."""
        return {
            "code": self.error_code,
            "message": self.message,
            "details": self.details,
        }


class InvalidArgumentError(PrivQueryException):
    """A caller passed a value outside the domain an operation accepts."""

    def __init__(
        self,
        message: str = "Invalid argument",
        argument: Optional[str] = None,
        value: Any = None,
        **kwargs: Any,
    ):
        details = {"argument": argument, "value": _jsonable(value)}
        details.update(kwargs.pop("details", {}) or {})
        super().__init__(
            message=message,
            error_code="INVALID_ARGUMENT",
            details=details,
            **kwargs,
        )


class UnsupportedOperationError(PrivQueryException):
    """The requested operation is not defined for this family or marginal."""

    def __init__(
        self,
        message: str = "Unsupported operation",
        operation: Optional[str] = None,
        **kwargs: Any,
    ):
        super().__init__(
            message=message,
            error_code="UNSUPPORTED_OPERATION",
            details={"operation": operation},
            **kwargs,
        )


class InfeasibleParametersError(PrivQueryException):
    """The supplied sample is too small for the derived pipeline constants."""

    def __init__(
        self,
        message: str,
        minimal_n: Optional[int] = None,
        required: Optional[int] = None,
        available: Optional[int] = None,
        **kwargs: Any,
    ):
        self.minimal_n = minimal_n
        super().__init__(
            message=message,
            error_code="INFEASIBLE_PARAMETERS",
            details={
                "minimal_n": minimal_n,
                "required": required,
                "available": available,
            },
            **kwargs,
        )


class ConfigurationError(PrivQueryException):
    """Exception for configuration file errors."""

    def __init__(
        self,
        message: str = "Configuration error",
        config_key: Optional[str] = None,
        **kwargs: Any,
    ):
        details = {"config_key": config_key}
        details.update(kwargs.pop("details", {}) or {})
        super().__init__(
            message=message,
            error_code="CONFIGURATION_ERROR",
            details=details,
            **kwargs,
        )


class VerificationError(PrivQueryException):
    """A self-check found a violated property."""

    def __init__(
        self,
        message: str,
        check: Optional[str] = None,
        instance: Optional[Dict[str, Any]] = None,
        **kwargs: Any,
    ):
        super().__init__(
            message=message,
            error_code="VERIFICATION_FAILED",
            details={"check": check, "instance": instance or {}},
            **kwargs,
        )


def _jsonable(value: Any) -> Any:
    if value is None or isinstance(value, (bool, int, float, str)):
        return value
    return repr(value)


# Utility functions for raising common exceptions
def raise_invalid_argument(message: str, argument: str, value: Any = None) -> NoReturn:
    """Raise an invalid-argument exception."""
    raise InvalidArgumentError(message=message, argument=argument, value=value)


def raise_unsupported(message: str, operation: str) -> NoReturn:
    """Raise an unsupported-operation exception."""
    raise UnsupportedOperationError(message=message, operation=operation)


def raise_infeasible(
    message: str,
    minimal_n: Optional[int] = None,
    required: Optional[int] = None,
    available: Optional[int] = None,
) -> NoReturn:
    """Raise an infeasible-parameters exception."""
    raise InfeasibleParametersError(
        message=message, minimal_n=minimal_n, required=required, available=available
    )


def require_probability(value: float, argument: str, *, open_low: bool = True, open_high: bool = True) -> None:
    """Check ``value`` lies in the unit interval with the requested openness."""
    low_ok = value > 0 if open_low else value >= 0
    high_ok = value < 1 if open_high else value <= 1
    if not (low_ok and high_ok):
        lo = "(" if open_low else "["
        hi = ")" if open_high else "]"
        raise_invalid_argument(f"{argument} must lie in {lo}0, 1{hi}", argument, value)


def require_positive(value: float, argument: str) -> None:
    """Check ``value`` is strictly positive."""
    if not value > 0:
        raise_invalid_argument(f"{argument} must be positive", argument, value)
