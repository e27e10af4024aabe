"""Main CLI entry point for ocl-bench."""

# Usage errors print as one plain line; runs before the command modules import typer.
def _patch_typer_rich_errors():
    try:
        import sys

        import typer.rich_utils as rich_utils
    except ImportError:
        return

    def plain_usage_error(err):
        message = err.format_message() if hasattr(err, "format_message") else str(err)
        print(f"Error: {message}", file=sys.stderr)

    rich_utils.rich_format_error = plain_usage_error


_patch_typer_rich_errors()

import logging
import platform
import sys
from datetime import datetime
from typing import Optional

import numpy as np
import typer
from rich.logging import RichHandler

from .commands import generate, report, run, selftest
from .utils.config import default_config_dict, load_experiment_config
from .utils.formatting import print_success, print_yaml
from .utils.validation import handle_errors, validate_command

app = typer.Typer(
    name="ocl-bench",
    help="Online continual learning strategies and benchmark harness",
    add_completion=False,
    pretty_exceptions_enable=False,
    no_args_is_help=True,
    rich_markup_mode=None,
)


def configure_logging(verbose: bool) -> None:
    root = logging.getLogger("ocl_bench")
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = RichHandler(show_path=False, markup=False)
    handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    root.addHandler(handler)
    root.setLevel(logging.DEBUG if verbose else logging.WARNING)
    root.propagate = False


@app.callback()
def main(
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Log per-batch progress to stderr"),
):
    """Online continual learning strategies and benchmark harness."""
    configure_logging(verbose)


app.command("generate")(generate.generate)
app.command("run")(run.run)
app.command("report")(report.report)
app.command("selftest")(selftest.selftest)


def install_time(version_string: str) -> Optional[datetime]:
    """Timestamp encoded in a ``YYYY.M.D.HHMM`` version, if it is one."""
    try:
        year, month, day, hhmm = version_string.split(".")
        return datetime(int(year), int(month), int(day), int(hhmm[:2]), int(hhmm[2:]))
    except ValueError:
        return None


@app.command("version")
def version():
    """Show version information."""
    from . import __author__, __email__, __version__

    print(f"ocl-bench version: {__version__}")
    print(f"Author: {__author__} ({__email__})")
    stamped = install_time(__version__)
    if stamped is not None:
        print(f"Installed: {stamped:%Y-%m-%d at %H:%M}")
    else:
        print("Development version")
    print(f"Python: {platform.python_version()}  numpy: {np.__version__}")
    print(f"Platform: {sys.platform}")


@app.command("config")
@handle_errors(command_context="config")
@validate_command(path_params=["config_file"], command_context="config")
def show_config(
    config_file: Optional[str] = typer.Argument(None, help="Experiment config (YAML) to validate"),
    overrides: Optional[str] = typer.Option(
        None, "--set", help="JSON object deep-merged over the config file"
    ),
    print_defaults: bool = typer.Option(
        False, "--print-defaults", help="Print every config key with its default"
    ),
):
    """Validate a config and print the effective settings, or print the defaults."""
    if print_defaults or not config_file:
        print_yaml(default_config_dict())
        return

    config = load_experiment_config(config_file, overrides)
    print_yaml(config.model_dump(mode="json", by_alias=True))
    print_success(f"{config_file} is valid")


if __name__ == "__main__":
    app()
