"""Report command for ocl-bench: aggregate run records across seeds."""

import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import typer

from ..core.metrics import (
    RunRecord,
    aggregate_runs,
    average_accuracy_series,
    first_task_retention,
)
from ..exceptions import ManifestMismatchError, ValidationError
from ..utils.formatting import print_comparison_table, print_success
from ..utils.io import RECORD_FILE, read_json, write_csv, write_json
from ..utils.validation import handle_errors, validate_command

logger = logging.getLogger(__name__)

SERIES_COLUMNS = ["strategy", "metric", "step", "mean", "std", "runs"]


def _clean(values) -> List[Optional[float]]:
    return [None if (v is None or math.isnan(v)) else float(v) for v in np.ravel(values)]


def collect_records(paths: List[str]) -> List[RunRecord]:
    """Load every ``record.json`` under the given files or directories."""
    files: List[Path] = []
    for raw in paths:
        path = Path(raw)
        if path.is_file():
            files.append(path)
        else:
            files.extend(sorted(path.rglob(RECORD_FILE)))
    if not files:
        raise ValidationError(f"No {RECORD_FILE} found under {', '.join(paths)}")
    unique = sorted({f.resolve() for f in files})
    return [RunRecord.model_validate(read_json(f)) for f in unique]


def manifest_differences(left: Dict[str, Any], right: Dict[str, Any]) -> List[Dict[str, str]]:
    differences = []
    for key in sorted(set(left) | set(right)):
        if key == "batches":
            continue
        if left.get(key) != right.get(key):
            differences.append({"field": key, "left": str(left.get(key)), "right": str(right.get(key))})
    lb, rb = left.get("batches", []), right.get("batches", [])
    if len(lb) != len(rb):
        differences.append({"field": "batches", "left": str(len(lb)), "right": str(len(rb))})
    else:
        for a, b in zip(lb, rb):
            for key in ("task_label", "class_set", "n_examples"):
                if a.get(key) != b.get(key):
                    differences.append(
                        {"field": f"batches[{a['index']}].{key}", "left": str(a.get(key)), "right": str(b.get(key))}
                    )
    return differences


def check_same_scenario(records: List[RunRecord]) -> None:
    reference = records[0]
    for record in records[1:]:
        if record.manifest_digest != reference.manifest_digest:
            raise ManifestMismatchError(
                f"Run {record.strategy}/seed {record.seed} used a different scenario than "
                f"{reference.strategy}/seed {reference.seed}",
                manifest_differences(reference.manifest, record.manifest),
            )


def _mean_std(series: List[List[float]]) -> Dict[str, List[Optional[float]]]:
    mean, std = aggregate_runs([np.array(s, dtype=np.float64) for s in series])
    return {"mean": _clean(mean), "std": _clean(std)}


def summarize(records: List[RunRecord]) -> Dict[str, Any]:
    check_same_scenario(records)
    by_strategy: Dict[str, List[RunRecord]] = {}
    for record in sorted(records, key=lambda r: (r.strategy, r.seed)):
        by_strategy.setdefault(record.strategy, []).append(record)

    strategies: Dict[str, Any] = {}
    for name, group in by_strategy.items():
        matrices = [r.matrix() for r in group]
        matrix_mean, matrix_std = aggregate_runs(matrices)
        entry = {
            "runs": len(group),
            "seeds": [r.seed for r in group],
            "average_accuracy": _mean_std([average_accuracy_series(m) for m in matrices]),
            "first_task_retention": _mean_std([first_task_retention(m) for m in matrices]),
            "matrix_mean": [_clean(row) for row in matrix_mean],
            "matrix_std": [_clean(row) for row in matrix_std],
            "memory_bound_ok": all(r.memory_bound_ok for r in group),
        }
        extra_keys = sorted({k for r in group for k in r.extra})
        for key in extra_keys:
            extra_matrices = [r.extra[key].to_array() for r in group if key in r.extra]
            entry[f"{key}_average_accuracy"] = _mean_std([average_accuracy_series(m) for m in extra_matrices])
        strategies[name] = entry

    return {
        "manifest_digest": records[0].manifest_digest,
        "n_batches": records[0].accuracy.n_batches,
        "strategies": strategies,
    }


def series_rows(summary: Dict[str, Any]) -> List[Dict[str, Any]]:
    rows = []
    for name, entry in summary["strategies"].items():
        for metric in ["average_accuracy", "first_task_retention"] + [
            k for k in entry if k.endswith("_average_accuracy") and k != "average_accuracy"
        ]:
            for step, (mean, std) in enumerate(zip(entry[metric]["mean"], entry[metric]["std"]), start=1):
                rows.append(
                    {
                        "strategy": name,
                        "metric": metric,
                        "step": step,
                        "mean": "" if mean is None else repr(mean),
                        "std": "" if std is None else repr(std),
                        "runs": entry["runs"],
                    }
                )
    return rows


def comparison_rows(summary: Dict[str, Any]) -> List[Dict[str, Any]]:
    def last(values: List[Optional[float]]) -> float:
        return float("nan") if values[-1] is None else values[-1]

    return [
        {
            "strategy": name,
            "runs": entry["runs"],
            "final_mean": last(entry["average_accuracy"]["mean"]),
            "final_std": last(entry["average_accuracy"]["std"]),
            "retention_mean": last(entry["first_task_retention"]["mean"]),
            "retention_std": last(entry["first_task_retention"]["std"]),
        }
        for name, entry in summary["strategies"].items()
    ]


@handle_errors(command_context="report")
@validate_command(path_params=["run_dirs"], command_context="report")
def report(
    run_dirs: List[str] = typer.Argument(..., help="Run directories or record.json files"),
    output: str = typer.Option("report", "--output", "-o", help="Directory for summary.json and series.csv"),
    no_table: bool = typer.Option(False, "--no-table", help="Skip the comparison table"),
):
    """Aggregate run records into a summary JSON and a plot-ready CSV."""
    records = collect_records(run_dirs)
    summary = summarize(records)

    target = Path(output)
    write_json(target / "summary.json", summary)
    write_csv(target / "series.csv", SERIES_COLUMNS, series_rows(summary))
    logger.debug("Report over %d records written to %s", len(records), target)

    if not no_table:
        print_comparison_table(comparison_rows(summary))
    print_success(f"Summary of {len(records)} runs written to {target}")
