"""Output formatting utilities for ocl-bench."""

import json
import math
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import yaml
from rich.console import Console
from rich.table import Table


def print_success(message: str) -> None:
    """Print success message."""
    print(f"OK: {message}")


def print_error(message: str) -> None:
    """Print error message."""
    print(f"ERROR: {message}")


def print_info(message: str) -> None:
    """Print info message."""
    print(f"INFO: {message}")


def print_warning(message: str) -> None:
    """Print warning message."""
    print(f"WARNING: {message}")


def print_json(data: Any) -> None:
    print(json.dumps(data, indent=2, default=str))


def print_yaml(data: Any) -> None:
    """Print data as formatted YAML."""
    try:
        yaml_str = yaml.dump(
            data, default_flow_style=False, allow_unicode=True, sort_keys=False
        )
        print(yaml_str)
    except Exception as e:
        print_error(f"Failed to format YAML: {e}")
        print(json.dumps(data, indent=2, default=str))


def _cell(value: Optional[float]) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "-"
    return f"{value:.3f}"


def format_accuracy_matrix(R: np.ndarray) -> str:
    """Format an accuracy matrix as plain text, one row per training batch."""
    R = np.asarray(R, dtype=np.float64)
    if R.size == 0:
        return "No accuracies recorded."

    header = "after\\test\t" + "\t".join(f"B{j + 1}" for j in range(R.shape[1]))
    lines = [header]
    for i, row in enumerate(R):
        lines.append(f"B{i + 1}\t" + "\t".join(_cell(v) for v in row))
    return "\n".join(lines)


def format_scenario_summary(manifest: Dict[str, Any]) -> str:
    """Format a scenario manifest as plain text."""
    lines = [
        f"Kind: {manifest['kind']}",
        f"Content: {manifest['content']}",
        f"Seed: {manifest['seed']}",
        f"Classes: {manifest['n_classes']}",
        f"Dim: {manifest['dim']}",
        f"Test examples: {manifest['n_test']}",
    ]
    for batch in manifest["batches"]:
        classes = ",".join(str(c) for c in batch["class_set"])
        task = "-" if batch["task_label"] is None else batch["task_label"]
        lines.append(f"B{batch['index']}\ttask={task}\tn={batch['n_examples']}\tclasses={classes}")
    return "\n".join(lines)


def format_oracle_results(results: Sequence[Dict[str, Any]]) -> str:
    if not results:
        return "No oracle suites run."

    lines = []
    for result in results:
        status = "ok" if result["passed"] else "FAILED"
        lines.append(f"{result['name']}\t{status}\t{result['value']:.3g}\t{result['detail']}")
    return "\n".join(lines)


def print_comparison_table(rows: List[Dict[str, Any]], title: str = "Strategy comparison") -> None:
    """Print final average accuracy and first-batch retention per strategy."""
    table = Table(title=title)
    table.add_column("strategy")
    table.add_column("runs", justify="right")
    table.add_column("final avg acc", justify="right")
    table.add_column("first-batch retention", justify="right")
    for row in rows:
        table.add_row(
            row["strategy"],
            str(row["runs"]),
            f"{_cell(row['final_mean'])} ± {_cell(row['final_std'])}",
            f"{_cell(row['retention_mean'])} ± {_cell(row['retention_std'])}",
        )
    Console().print(table)
