"""Error formatting utilities for ocl-bench."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import pydantic

from ..exceptions import (
    ConfigurationError,
    DatasetParseError,
    EmptyDatasetError,
    ManifestMismatchError,
    NetworkStateError,
    NumericError,
    ValidationError,
)

CONFIG_HINT = "Run 'ocl-bench config --print-defaults' to see every key with its default"


@dataclass
class ErrorMessage:
    """A user-facing error block: what failed, what was given, how to fix it."""

    title: str
    description: str
    received: Optional[str] = None
    expected: Optional[str] = None
    examples: List[str] = field(default_factory=list)
    suggestions: List[str] = field(default_factory=list)
    command_context: Optional[str] = None

    def render(self) -> str:
        lines = [f"Error: {self.title}", self.description]
        if self.received:
            lines.append(f"\nReceived: {self.received}")
        if self.expected:
            lines.append(f"Expected: {self.expected}")
        if self.examples:
            lines.append("\nExample usage:")
            lines.extend(f"  {e}" for e in self.examples)
        if self.suggestions:
            lines.append("\nSuggestions:")
            lines.extend(f"  - {s}" for s in self.suggestions)
        if self.command_context:
            lines.append(f"\nRun 'ocl-bench {self.command_context} --help' for more information.")
        return "\n".join(lines)


class ErrorFormatter:
    """Formats error messages with helpful examples and suggestions."""

    @staticmethod
    def format_error_message(
        error_type: str,
        description: str,
        received: Optional[str] = None,
        expected: Optional[str] = None,
        examples: Optional[List[str]] = None,
        suggestions: Optional[List[str]] = None,
        command_context: Optional[str] = None,
    ) -> str:
        return ErrorMessage(
            error_type,
            description,
            received,
            expected,
            list(examples or []),
            list(suggestions or []),
            command_context,
        ).render()

    @staticmethod
    def print_formatted_error(*args, **kwargs) -> None:
        print(ErrorFormatter.format_error_message(*args, **kwargs))


def pydantic_error_lines(error: pydantic.ValidationError) -> List[str]:
    """One ``dotted.field.path: message`` line per validation failure."""
    lines = []
    for item in error.errors():
        path = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{path}: {item['msg']}")
    return lines


def close_matches(value: str, choices: List[str]) -> List[str]:
    needle = value.lower()
    return [c for c in choices if c.lower().startswith(needle) or needle in c.lower()]


class InputValidator:
    """Checks on raw CLI arguments, printing an error block before raising."""

    @staticmethod
    def validate_existing_path(path: str, parameter_name: str, command_context: str = "") -> Path:
        resolved = Path(path)
        if not resolved.exists():
            ErrorFormatter.print_formatted_error(
                "File Not Found",
                f"The path given for '{parameter_name}' does not exist.",
                received=f"'{path}'",
                expected="An existing file or directory",
                command_context=command_context,
            )
            raise ValidationError(f"Path not found: {path}")
        return resolved

    @staticmethod
    def validate_choice_parameter(
        value: str,
        valid_choices: List[str],
        parameter_name: str,
        command_context: str = "",
    ) -> str:
        """Return ``value`` if it is one of ``valid_choices``.

        Raises:
            ValidationError: If it is not; near misses are offered as suggestions
        """
        if value in valid_choices:
            return value

        option = f"--{parameter_name.replace('_', '-')}"
        ErrorFormatter.print_formatted_error(
            "Invalid Parameter Value",
            f"The value '{value}' is not valid for parameter '{parameter_name}'.",
            received=f"'{value}'",
            expected=f"One of: {', '.join(valid_choices)}",
            examples=[f"{option} {choice}" for choice in valid_choices[:3]],
            suggestions=[f"Did you mean '{c}'?" for c in close_matches(value, valid_choices)]
            or ["Use one of the valid choices listed above"],
            command_context=command_context,
        )
        raise ValidationError(f"Invalid {parameter_name}: {value}")


def describe_error(error: Exception, command_context: str = "") -> ErrorMessage:
    """Map an exception raised by a command to the block shown to the user."""
    if isinstance(error, pydantic.ValidationError):
        return ErrorMessage(
            "Invalid Configuration",
            "The experiment configuration failed validation:\n  "
            + "\n  ".join(pydantic_error_lines(error)),
            suggestions=[CONFIG_HINT, "Check the spelling of the keys listed above"],
            command_context=command_context,
        )
    if isinstance(error, ConfigurationError):
        return ErrorMessage(
            "Infeasible Configuration",
            str(error),
            suggestions=[
                "Lower scenario.n_batches or raise dataset.n_classes / dataset.per_class",
                "Validate the file with 'ocl-bench config FILE'",
            ],
            command_context=command_context,
        )
    if isinstance(error, (DatasetParseError, EmptyDatasetError)):
        return ErrorMessage(
            "Dataset Error",
            str(error),
            expected="Comma-separated numeric columns with one integer label column",
            examples=["x1,x2,label", "0.5,1.25,3"],
            command_context=command_context,
        )
    if isinstance(error, ManifestMismatchError):
        diff = [f"{d['field']}: {d['left']} != {d['right']}" for d in error.differences]
        return ErrorMessage(
            "Mixed Scenarios",
            "\n  ".join([str(error)] + diff),
            suggestions=["Report only run directories produced from the same scenario"],
            command_context=command_context,
        )
    if isinstance(error, NumericError):
        where = "" if error.batch_index is None else f" in batch {error.batch_index}"
        return ErrorMessage(
            "Numeric Failure",
            f"Training diverged{where}: {error}",
            suggestions=["Lower strategy.lr", "Lower strategy.lambda"],
            command_context=command_context,
        )
    if isinstance(error, (ValidationError, NetworkStateError)):
        return ErrorMessage("Invalid Argument", str(error), command_context=command_context)
    return ErrorMessage(
        "Unexpected Error",
        f"{type(error).__name__}: {error}",
        suggestions=["Re-run with --verbose for debug logging"],
        command_context=command_context,
    )


def handle_library_error(error: Exception, command_context: str = "") -> None:
    print(describe_error(error, command_context).render())
