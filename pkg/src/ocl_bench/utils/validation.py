"""Validation decorators and exit-code mapping for ocl-bench commands."""

import functools
import logging
from typing import Callable, List, Optional, Tuple

import pydantic
import typer

from ..exceptions import (
    ConfigurationError,
    DatasetParseError,
    EmptyDatasetError,
    ManifestMismatchError,
    NumericError,
    OclBenchError,
    ValidationError,
)
from .error_handling import InputValidator, handle_library_error

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

_CONFIG_ERRORS = (
    pydantic.ValidationError,
    ConfigurationError,
    ValidationError,
    DatasetParseError,
    EmptyDatasetError,
    ManifestMismatchError,
)


def exit_code_for(error: Exception) -> int:
    if isinstance(error, NumericError):
        return EXIT_NUMERIC
    if isinstance(error, _CONFIG_ERRORS):
        return EXIT_CONFIG
    return EXIT_FAILURE


def handle_errors(command_context: str = ""):
    """Decorator to format errors consistently and map them to exit codes.

    Args:
        command_context: Command context for error messages
    """

    def decorator(func: Callable) -> Callable:
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            context = command_context or func.__module__.split(".")[-1]
            try:
                return func(*args, **kwargs)
            except typer.Exit:
                raise
            except (OclBenchError, pydantic.ValidationError) as e:
                handle_library_error(e, context)
                raise typer.Exit(exit_code_for(e))
            except Exception as e:
                logger.debug("Unhandled error in %s", context, exc_info=True)
                handle_library_error(e, context)
                raise typer.Exit(EXIT_FAILURE)

        return wrapper

    return decorator


def validate_command(
    path_params: Optional[List[str]] = None,
    choice_params: Optional[List[Tuple[str, List[str]]]] = None,
    command_context: str = "",
):
    """Combined decorator validating path and choice parameters before the command runs.

    Args:
        path_params: Names of parameters that must point at existing paths
        choice_params: List of (param_name, valid_choices) tuples
        command_context: Command context for error messages
    """

    def decorator(func: Callable) -> Callable:
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            context = command_context or func.__module__.split(".")[-1]
            try:
                for param in path_params or []:
                    value = kwargs.get(param)
                    if value:
                        values = value if isinstance(value, list) else [value]
                        for item in values:
                            InputValidator.validate_existing_path(str(item), param, context)

                for param_name, valid_choices in choice_params or []:
                    value = kwargs.get(param_name)
                    if value:
                        values = value if isinstance(value, list) else [value]
                        for item in values:
                            InputValidator.validate_choice_parameter(
                                item, valid_choices, param_name, context
                            )
            except ValidationError:
                raise typer.Exit(EXIT_CONFIG)

            return func(*args, **kwargs)

        return wrapper

    return decorator
