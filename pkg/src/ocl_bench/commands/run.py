"""Strategy run command for ocl-bench."""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import typer

from ..core.learners import Learner, build_learner
from ..core.metrics import (
    AccuracyMatrix,
    RunRecord,
    accuracy,
    average_accuracy,
    empty_matrix,
    manifest_digest,
    partition_arrays,
    test_partitions,
)
from ..core.stream import ResourceTrace, Scenario, audit_memory_bound
from ..models import ExperimentConfig, StrategyBlock, StrategyName
from ..utils.config import load_experiment_config, scenario_from_config
from ..utils.formatting import format_accuracy_matrix, print_info, print_success, print_warning
from ..utils.io import (
    METRICS_COLUMNS,
    METRICS_FILE,
    RECORD_FILE,
    SNAPSHOT_FILE,
    metrics_rows,
    read_scenario,
    write_csv,
    write_json,
)
from ..utils.validation import handle_errors, validate_command

logger = logging.getLogger(__name__)


def strategy_dirname(name: str) -> str:
    """Filesystem-friendly directory name for a strategy (``ar1*free`` -> ``ar1_star_free``)."""
    return name.replace("+", "_plus").replace("*", "_star_").replace("-", "_").strip("_").replace("__", "_")


def run_seed(block: StrategyBlock, scenario: Scenario, seed: int) -> Tuple[RunRecord, Dict]:
    """Train one learner over the whole stream, evaluating after every batch."""
    learner: Learner = build_learner(block, scenario, seed)
    parts = test_partitions(scenario)
    arrays = partition_arrays(parts)
    n = len(scenario.batches)

    R = empty_matrix(n)
    extra: Dict[str, np.ndarray] = {}
    trace = ResourceTrace()
    wall: List[float] = []
    reports = []
    seen = 0

    for i, batch in enumerate(scenario.batches):
        started = time.perf_counter()
        reports.append(learner.train(batch))
        wall.append(time.perf_counter() - started)
        seen += len(batch)
        trace.record(batch.index, learner.stored_examples, seen)

        for j in range(i + 1):
            if arrays[j] is None:
                continue
            X, y = arrays[j]
            R[i, j] = accuracy(learner.predict(X), y)
            for key, predictions in learner.extra_predictions(X).items():
                if key == "instance":
                    targets = np.array([e.instance_label for e in parts[j]], dtype=np.int64)
                else:
                    targets = y
                extra.setdefault(key, empty_matrix(n))[i, j] = accuracy(predictions, targets)
        logger.info(
            "%s seed=%d batch %d: avg acc %.3f, stored %d",
            block.name.value,
            seed,
            batch.index,
            average_accuracy(R, i),
            learner.stored_examples,
        )

    verdict = audit_memory_bound(trace)
    if not verdict.ok:
        logger.warning(
            "%s seed=%d: memory bound violated at step %s", block.name.value, seed, verdict.first_violation
        )
    manifest = scenario.manifest()
    record = RunRecord(
        strategy=block.name.value,
        seed=seed,
        manifest_digest=manifest_digest(manifest),
        manifest=manifest,
        accuracy=AccuracyMatrix.from_array(R),
        resource_trace=trace.to_list(),
        wall_time=wall,
        extra={k: AccuracyMatrix.from_array(v) for k, v in extra.items()},
        batch_reports=reports,
        memory_bound_ok=verdict.ok,
        first_violation=verdict.first_violation,
    )
    return record, learner.snapshot()


def write_run(record: RunRecord, snapshot: Dict, directory: Path) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    write_csv(directory / METRICS_FILE, METRICS_COLUMNS, metrics_rows(record.strategy, record.seed, record.matrix()))
    write_json(directory / RECORD_FILE, record.model_dump(mode="json"))
    write_json(directory / SNAPSHOT_FILE, snapshot)
    return directory


def run_experiment(
    config: ExperimentConfig,
    scenario: Scenario,
    output_root: Path,
    workers: int = 1,
) -> List[Tuple[RunRecord, Path]]:
    jobs = [(block, seed) for block in config.strategy_blocks() for seed in config.scenario.seeds]

    def job(item: Tuple[StrategyBlock, int]) -> Tuple[RunRecord, Path]:
        block, seed = item
        record, snapshot = run_seed(block, scenario, seed)
        target = output_root / strategy_dirname(block.name.value) / f"seed_{seed}"
        return record, write_run(record, snapshot, target)

    if workers <= 1:
        return [job(item) for item in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, jobs))


@handle_errors(command_context="run")
@validate_command(
    path_params=["config_file", "scenario_path"],
    choice_params=[("strategy", [s.value for s in StrategyName])],
    command_context="run",
)
def run(
    config_file: str = typer.Argument(..., help="Experiment config (YAML)"),
    scenario_path: Optional[str] = typer.Option(
        None, "--scenario", help="Scenario directory written by 'generate' (default: build from config)"
    ),
    overrides: Optional[str] = typer.Option(
        None, "--set", help="JSON object deep-merged over the config file"
    ),
    strategy: Optional[List[str]] = typer.Option(
        None, "--strategy", "-s", help="Strategy to run (repeatable; overrides the config)"
    ),
    output: Optional[str] = typer.Option(
        None, "--output", "-o", help="Run directory (default: <output_dir>/<name>/runs)"
    ),
    workers: int = typer.Option(1, "--workers", "-w", min=1, help="Parallel worker threads"),
    show_matrix: bool = typer.Option(False, "--show-matrix", help="Print every accuracy matrix"),
):
    """Run strategies over a scenario and write metrics, records and snapshots."""
    config = load_experiment_config(config_file, overrides)
    if strategy:
        config = config.model_copy(update={"strategies": [StrategyName(s) for s in strategy]})

    scenario = read_scenario(scenario_path) if scenario_path else scenario_from_config(config)
    output_root = Path(output) if output else Path(config.output_dir) / config.name / "runs"
    print_info(
        f"Running {len(config.strategy_blocks())} strategies x {len(config.scenario.seeds)} seeds "
        f"over {len(scenario.batches)} batches"
    )

    results = run_experiment(config, scenario, output_root, workers)
    for record, directory in results:
        final = average_accuracy(record.matrix(), record.matrix().shape[0] - 1)
        print(f"{record.strategy}\tseed={record.seed}\tfinal avg acc={final:.3f}\t{directory}")
        if show_matrix:
            print(format_accuracy_matrix(record.matrix()))
        if not record.memory_bound_ok:
            print_warning(
                f"{record.strategy} seed={record.seed}: stored examples reached the examples seen "
                f"at step {record.first_violation}"
            )
    print_success(f"{len(results)} runs written to {output_root}")
