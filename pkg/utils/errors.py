# utils/errors.py

import logging
import traceback
from datetime import datetime
from enum import Enum
from functools import wraps
from typing import Any, Callable, Dict, List, Optional


class ErrorSeverity(Enum):
    """Error severity levels for categorization."""
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"
    CRITICAL = "critical"


class ErrorCategory(Enum):
    """Error categories; each one maps to a CLI exit code."""
    CONFIG = "config"
    VALIDATION = "validation"
    INFEASIBLE = "infeasible"
    CONVERGENCE = "convergence"
    NUMERIC = "numeric"


EXIT_CODES = {
    ErrorCategory.CONFIG: 2,
    ErrorCategory.VALIDATION: 2,
    ErrorCategory.INFEASIBLE: 3,
    ErrorCategory.CONVERGENCE: 4,
    ErrorCategory.NUMERIC: 5,
}

EXIT_OK = 0
EXIT_INTERNAL = 5


class CoopRadioError(Exception):
    """Base exception for policy computation and simulation errors."""

    def __init__(self, message: str, category: ErrorCategory = ErrorCategory.NUMERIC,
                 severity: ErrorSeverity = ErrorSeverity.MEDIUM, details: Dict[str, Any] = None):
        super().__init__(message)
        self.message = message
        self.category = category
        self.severity = severity
        self.details = details or {}
        self.timestamp = datetime.utcnow()

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.category]


class ConfigError(CoopRadioError):
    """Unreadable, malformed or out-of-range configuration."""

    def __init__(self, message: str, details: Dict[str, Any] = None):
        super().__init__(message, ErrorCategory.CONFIG, ErrorSeverity.MEDIUM, details)


class DimensionError(CoopRadioError):
    """Array shapes that do not match the system they are applied to."""

    def __init__(self, message: str, details: Dict[str, Any] = None):
        super().__init__(message, ErrorCategory.VALIDATION, ErrorSeverity.MEDIUM, details)


class InvalidPolicyError(CoopRadioError):
    """A policy that violates nonnegativity or normalization."""

    def __init__(self, message: str, details: Dict[str, Any] = None):
        super().__init__(message, ErrorCategory.VALIDATION, ErrorSeverity.MEDIUM, details)


class InfeasibleError(CoopRadioError):
    """No admissible policy exists for the requested instance."""

    def __init__(self, message: str, details: Dict[str, Any] = None):
        super().__init__(message, ErrorCategory.INFEASIBLE, ErrorSeverity.MEDIUM, details)


class SensingError(InfeasibleError):
    """Sensing parameters that leave no feasible busy probability (P_D = 0 with λ_p > 0)."""


class ConvergenceError(CoopRadioError):
    """An iterative method hit its iteration cap."""

    def __init__(self, message: str, details: Dict[str, Any] = None):
        super().__init__(message, ErrorCategory.CONVERGENCE, ErrorSeverity.HIGH, details)


class NumericError(CoopRadioError):
    """Internal numerical failure (failed audit, cycling, non-finite values)."""

    def __init__(self, message: str, details: Dict[str, Any] = None):
        super().__init__(message, ErrorCategory.NUMERIC, ErrorSeverity.HIGH, details)


class ErrorHandler:
    """
    Turns exceptions raised inside CLI commands into error records and exit codes.
    Keeps per-category counts, which go into the run manifest, and a bounded history.
    """

    def __init__(self, max_history_size: int = 100):
        self.error_counts: Dict[str, int] = {}
        self.error_history: List[Dict[str, Any]] = []
        self.max_history_size = max_history_size
        self.logger = logging.getLogger(__name__)

    def handle(self, error: Exception, operation: str = None) -> Dict[str, Any]:
        """
        Log and record an error.

        Args:
            error: The exception that escaped the command
            operation: Name of the command that failed

        Returns:
            Error record with the exit code the process should use
        """
        if isinstance(error, CoopRadioError):
            category = error.category.value
            severity = error.severity.value
            exit_code = error.exit_code
            details = dict(error.details)
            self.logger.error(f"{operation or 'command'} failed ({category}): {error.message}")
        else:
            category = "internal"
            severity = ErrorSeverity.CRITICAL.value
            exit_code = EXIT_INTERNAL
            details = {'traceback': traceback.format_exc()}
            self.logger.exception(f"Unexpected error in {operation or 'command'}: {error}")

        record = {
            'status': 'error',
            'error_type': type(error).__name__,
            'message': str(error),
            'category': category,
            'severity': severity,
            'operation': operation,
            'exit_code': exit_code,
            'details': details,
            'timestamp': datetime.utcnow().isoformat(),
        }
        self._record_error(category, severity, record)
        return record

    def _record_error(self, category: str, severity: str, record: Dict[str, Any]):
        error_key = f"{category}_{severity}"
        self.error_counts[error_key] = self.error_counts.get(error_key, 0) + 1
        self.error_history.append(record)
        if len(self.error_history) > self.max_history_size:
            self.error_history = self.error_history[-self.max_history_size:]

    def get_error_statistics(self) -> Dict[str, Any]:
        return {
            'error_counts': self.error_counts.copy(),
            'total_errors': sum(self.error_counts.values()),
        }

    @property
    def last_error(self) -> Optional[Dict[str, Any]]:
        return self.error_history[-1] if self.error_history else None


def with_error_handling(error_handler: ErrorHandler, operation_name: str = None):
    """
    Decorator for CLI command functions: returns the command's exit code,
    or the mapped exit code of any exception it raised.

    Args:
        error_handler: ErrorHandler instance to record into
        operation_name: Name of the operation for logging
    """
    def decorator(func: Callable[..., int]) -> Callable[..., int]:
        @wraps(func)
        def wrapper(*args, **kwargs) -> int:
            try:
                return func(*args, **kwargs)
            except Exception as e:
                record = error_handler.handle(e, operation_name or func.__name__)
                return record['exit_code']
        return wrapper
    return decorator
