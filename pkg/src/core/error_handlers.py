"""
Error handlers for the command line surface.
"""

import json
import logging
import sys
import traceback
from typing import Callable, Dict, Optional, Type

from pydantic import ValidationError as PydanticValidationError

from src.core.exceptions import EXIT_RUNTIME, EXIT_USAGE, StylisationError

logger = logging.getLogger(__name__)


def format_error(exit_code: int, message: str, details: Optional[dict] = None,
                 error_type: str = "error") -> dict:
    """Create a standardized error record."""
    content = {
        "error": {
            "type": error_type,
            "message": message,
            "exit_code": exit_code,
        }
    }

    if details:
        content["error"]["details"] = details

    return content


def _emit(record: dict) -> None:
    print(json.dumps(record, default=str), file=sys.stderr)


def stylisation_error_handler(exc: StylisationError) -> int:
    """Handle toolkit exceptions."""
    logger.warning(f"{exc.__class__.__name__}: {exc.message} - {exc.details}")
    _emit(format_error(exc.exit_code, exc.message, exc.details, exc.__class__.__name__))
    return exc.exit_code


def pydantic_validation_error_handler(exc: PydanticValidationError) -> int:
    """Handle invalid configuration documents."""
    logger.warning(f"PydanticValidationError: {exc.errors()}")

    formatted_errors = []
    for error in exc.errors():
        field = " -> ".join(str(loc) for loc in error["loc"])
        formatted_errors.append({
            "field": field,
            "message": error["msg"],
            "type": error["type"],
        })

    _emit(format_error(
        EXIT_USAGE,
        "Configuration validation failed",
        {"validation_errors": formatted_errors},
        "ValidationError",
    ))
    return EXIT_USAGE


def file_not_found_handler(exc: FileNotFoundError) -> int:
    """Handle missing input files."""
    logger.warning(f"FileNotFoundError: {exc}")
    _emit(format_error(EXIT_RUNTIME, f"File not found: {exc.filename or exc}", error_type="FileNotFoundError"))
    return EXIT_RUNTIME


def general_exception_handler(exc: Exception) -> int:
    """Handle unexpected exceptions."""
    logger.error(f"Unexpected error: {str(exc)}")
    logger.error(f"Traceback: {traceback.format_exc()}")

    _emit(format_error(EXIT_RUNTIME, f"An unexpected error occurred: {exc}", error_type="InternalError"))
    return EXIT_RUNTIME


# Dictionary mapping exception types to their handlers
EXCEPTION_HANDLERS: Dict[Type[BaseException], Callable[..., int]] = {
    StylisationError: stylisation_error_handler,
    PydanticValidationError: pydantic_validation_error_handler,
    FileNotFoundError: file_not_found_handler,
    Exception: general_exception_handler,  # Catch-all for unexpected errors
}


def handle_exception(exc: BaseException) -> int:
    """Dispatch to the most specific registered handler and return an exit code."""
    for klass in type(exc).__mro__:
        handler = EXCEPTION_HANDLERS.get(klass)
        if handler is not None:
            return handler(exc)
    return general_exception_handler(exc)
