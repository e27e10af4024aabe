"""Scenario generation command for ocl-bench."""

import logging
from pathlib import Path
from typing import Optional

import typer

from ..core.stream import check_task_structure
from ..utils.config import load_experiment_config, scenario_from_config
from ..utils.formatting import format_scenario_summary, print_success, print_warning
from ..utils.io import write_scenario
from ..utils.validation import handle_errors, validate_command

logger = logging.getLogger(__name__)


def scenario_dir(output_dir: str, name: str) -> Path:
    return Path(output_dir) / name / "scenario"


@handle_errors(command_context="generate")
@validate_command(path_params=["config_file"], command_context="generate")
def generate(
    config_file: str = typer.Argument(..., help="Experiment config (YAML)"),
    overrides: Optional[str] = typer.Option(
        None, "--set", help="JSON object deep-merged over the config file"
    ),
    output: Optional[str] = typer.Option(
        None, "--output", "-o", help="Scenario directory (default: <output_dir>/<name>/scenario)"
    ),
    quiet: bool = typer.Option(False, "--quiet", "-q", help="Do not print the scenario summary"),
):
    """Build the scenario described by a config and write it to disk."""
    config = load_experiment_config(config_file, overrides)
    scenario = scenario_from_config(config)

    verdict = check_task_structure(scenario)
    if not verdict.consistent:
        print_warning(f"Task labels do not match {scenario.kind.value}: {verdict.violation}")

    target = Path(output) if output else scenario_dir(config.output_dir, config.name)
    write_scenario(scenario, target)
    logger.debug("Scenario written to %s", target)

    if not quiet:
        print(format_scenario_summary(scenario.manifest()))
    print_success(f"Scenario with {len(scenario.batches)} batches written to {target}")
