"""File formats: scenario directories, metrics CSV and JSON records."""

import csv
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from ..core.stream import ContentKind, Example, Scenario, ScenarioKind, TrainingBatch
from ..exceptions import DatasetParseError, ValidationError

MANIFEST_FILE = "manifest.json"
EXAMPLES_FILE = "examples.csv"
METRICS_FILE = "metrics.csv"
RECORD_FILE = "record.json"
SNAPSHOT_FILE = "snapshot.json"

METRICS_COLUMNS = ["strategy", "seed", "batch_i", "test_batch_j", "accuracy"]


def dump_json(data: Any) -> str:
    return json.dumps(data, indent=2) + "\n"


def write_json(path: Union[str, Path], data: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_json(data), encoding="utf-8")
    return path


def read_json(path: Union[str, Path]) -> Any:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"File not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def _optional_int(cell: str) -> Optional[int]:
    return None if cell == "" else int(cell)


def write_scenario(scenario: Scenario, directory: Union[str, Path]) -> Path:
    """Write ``manifest.json`` and ``examples.csv`` (exact float repr)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_json(directory / MANIFEST_FILE, scenario.manifest())

    dim = scenario.dim
    header = ["split", "batch", "task", "label", "instance", "index"] + [f"x{k}" for k in range(dim)]

    def row(split: str, batch: Optional[int], example: Example) -> List[str]:
        return [
            split,
            "" if batch is None else str(batch),
            "" if example.t is None else str(example.t),
            str(example.y),
            "" if example.instance is None else str(example.instance),
            str(example.index),
        ] + [repr(float(v)) for v in example.x]

    with open(directory / EXAMPLES_FILE, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for batch in scenario.batches:
            for example in batch.examples:
                writer.writerow(row("train", batch.index, example))
        for example in scenario.test_set:
            writer.writerow(row("test", None, example))
    return directory


def read_scenario(directory: Union[str, Path]) -> Scenario:
    directory = Path(directory)
    manifest = read_json(directory / MANIFEST_FILE)
    examples_path = directory / EXAMPLES_FILE
    if not examples_path.exists():
        raise ValidationError(f"File not found: {examples_path}")

    by_batch: Dict[int, List[Example]] = {}
    test: List[Example] = []
    with open(examples_path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise DatasetParseError("examples file is empty", 1)
        for line, cells in enumerate(reader, start=2):
            if len(cells) != len(header):
                raise DatasetParseError(f"expected {len(header)} columns, found {len(cells)}", line)
            try:
                example = Example(
                    x=np.array([float(v) for v in cells[6:]], dtype=np.float64),
                    y=int(cells[3]),
                    t=_optional_int(cells[2]),
                    index=int(cells[5]),
                    instance=_optional_int(cells[4]),
                )
            except ValueError as e:
                raise DatasetParseError(str(e), line) from e
            if cells[0] == "train":
                by_batch.setdefault(int(cells[1]), []).append(example)
            else:
                test.append(example)

    task_labels = {b["index"]: b["task_label"] for b in manifest["batches"]}
    batches = tuple(
        TrainingBatch(index=i, examples=tuple(by_batch[i]), task_label=task_labels.get(i))
        for i in sorted(by_batch)
    )
    return Scenario(
        kind=ScenarioKind(manifest["kind"]),
        content=ContentKind(manifest["content"]),
        batches=batches,
        test_set=tuple(test),
        seed=int(manifest["seed"]),
        n_classes=int(manifest["n_classes"]),
    )


def metrics_rows(strategy: str, seed: int, R: np.ndarray) -> List[Dict[str, Any]]:
    """Rows for every defined ``j <= i`` entry, 1-based batch numbers."""
    rows = []
    R = np.asarray(R, dtype=np.float64)
    for i in range(R.shape[0]):
        for j in range(i + 1):
            value = R[i, j]
            rows.append(
                {
                    "strategy": strategy,
                    "seed": seed,
                    "batch_i": i + 1,
                    "test_batch_j": j + 1,
                    "accuracy": "" if math.isnan(value) else repr(float(value)),
                }
            )
    return rows


def write_csv(path: Union[str, Path], columns: Sequence[str], rows: Sequence[Dict[str, Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow(r)
    return path


def read_csv(path: Union[str, Path]) -> List[Dict[str, str]]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))
