"""Selftest command: run the numeric oracle suites."""

import typer

from ..core import oracles
from ..utils.formatting import format_oracle_results, print_error, print_json, print_success
from ..utils.validation import EXIT_FAILURE, handle_errors


@handle_errors(command_context="selftest")
def selftest(
    seed: int = typer.Option(0, "--seed", help="Seed for the random oracle instances"),
    as_json: bool = typer.Option(False, "--json", help="Print results as JSON"),
):
    """Check gradients, BMU search and SI against slow reference computations."""
    results = [r.to_dict() for r in oracles.run_all(seed)]
    if as_json:
        print_json(results)
    else:
        print(format_oracle_results(results))

    failed = [r["name"] for r in results if not r["passed"]]
    if failed:
        print_error(f"Oracle suites failed: {', '.join(failed)}")
        raise typer.Exit(EXIT_FAILURE)
    print_success(f"All {len(results)} oracle suites passed")
