"""Continual-learning data model: examples, batch sequences, scenarios and
bounded-resource auditing.

A scenario is the sequence of training sets ``Tr_1 .. Tr_N`` (each with an
optional task label) handed to a continual learner one at a time, plus a
held-out test set. Scenarios are immutable once built.
"""

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..exceptions import (
    ConfigurationError,
    DatasetParseError,
    EmptyDatasetError,
    ValidationError,
)

logger = logging.getLogger(__name__)


class ScenarioKind(str, Enum):
    """Task-label structure of a scenario."""

    SIT = "SIT"
    MT = "MT"
    MIT = "MIT"


class ContentKind(str, Enum):
    """Content update type between consecutive batches."""

    NI = "NI"
    NC = "NC"
    NIC = "NIC"


@dataclass(frozen=True, eq=False)
class Example:
    """A single observation ``<x, y>`` with an optional task label."""

    x: np.ndarray
    y: int
    t: Optional[int] = None
    index: int = -1
    instance: Optional[int] = None

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.x)):
            raise ValidationError(f"Example {self.index} has non-finite features")
        if self.y < 0:
            raise ValidationError(f"Example {self.index} has negative label {self.y}")

    @property
    def instance_label(self) -> int:
        return self.y if self.instance is None else self.instance


@dataclass(frozen=True, eq=False)
class TrainingBatch:
    """One training set ``Tr_i`` of the sequence (``index`` is 1-based)."""

    index: int
    examples: Tuple[Example, ...]
    task_label: Optional[int] = None

    def __post_init__(self) -> None:
        if not self.examples:
            raise ValidationError(f"Training batch {self.index} is empty")

    @property
    def class_set(self) -> List[int]:
        return sorted({e.y for e in self.examples})

    def arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        """Return ``(X, y)`` stacked in example order."""
        return stack_examples(self.examples)

    def __len__(self) -> int:
        return len(self.examples)


@dataclass(frozen=True, eq=False)
class Scenario:
    """A complete continual-learning scenario."""

    kind: ScenarioKind
    content: ContentKind
    batches: Tuple[TrainingBatch, ...]
    test_set: Tuple[Example, ...]
    seed: int
    n_classes: int

    @property
    def dim(self) -> int:
        return int(self.batches[0].examples[0].x.shape[0])

    @property
    def task_labels(self) -> List[Optional[int]]:
        return [b.task_label for b in self.batches]

    def without_task_labels(self) -> "Scenario":
        """Copy of the scenario with every task label withheld."""
        batches = tuple(
            TrainingBatch(
                index=b.index,
                examples=tuple(replace(e, t=None) for e in b.examples),
                task_label=None,
            )
            for b in self.batches
        )
        return replace(self, batches=batches)

    def manifest(self) -> Dict:
        """JSON-ready manifest describing the batch sequence."""
        return {
            "kind": self.kind.value,
            "content": self.content.value,
            "seed": self.seed,
            "n_classes": self.n_classes,
            "dim": self.dim,
            "n_test": len(self.test_set),
            "batches": [
                {
                    "index": b.index,
                    "task_label": b.task_label,
                    "class_set": b.class_set,
                    "n_examples": len(b.examples),
                }
                for b in self.batches
            ],
        }


@dataclass(frozen=True)
class TaskVerdict:
    consistent: bool
    violation: str = ""


@dataclass(frozen=True)
class BoundVerdict:
    ok: bool
    first_violation: Optional[int] = None


@dataclass(frozen=True)
class ResourceRecord:
    step: int
    stored: int
    seen: int


@dataclass
class ResourceTrace:
    """Per-step memory occupancy ``|M_i|`` against cumulative examples seen."""

    records: List[ResourceRecord] = field(default_factory=list)

    def record(self, step: int, stored: int, seen: int) -> None:
        if stored < 0 or seen < 0:
            raise ValidationError("Resource counts must be non-negative")
        if self.records and seen < self.records[-1].seen:
            raise ValidationError(
                f"Cumulative seen count decreased at step {step} "
                f"({self.records[-1].seen} -> {seen})"
            )
        self.records.append(ResourceRecord(step, stored, seen))

    def to_list(self) -> List[Dict[str, int]]:
        return [{"step": r.step, "stored": r.stored, "seen": r.seen} for r in self.records]

    @classmethod
    def from_list(cls, rows: Sequence[Dict[str, int]]) -> "ResourceTrace":
        trace = cls()
        for row in rows:
            trace.record(int(row["step"]), int(row["stored"]), int(row["seen"]))
        return trace

    def __len__(self) -> int:
        return len(self.records)


def stack_examples(examples: Sequence[Example]) -> Tuple[np.ndarray, np.ndarray]:
    X = np.stack([e.x for e in examples]).astype(np.float64)
    y = np.array([e.y for e in examples], dtype=np.int64)
    return X, y


def make_synthetic_dataset(
    seed: int,
    n_classes: int,
    dim: int,
    per_class: int,
    spread: float,
    instances_per_class: int = 1,
) -> List[Example]:
    """Gaussian class clusters around seeded, pairwise distinct centres.

    With ``instances_per_class > 1`` every class is made of that many object
    instances, each a sub-cluster offset from the class centre; examples are
    dealt to instances round-robin.
    """
    if n_classes < 2:
        raise ValidationError(f"n_classes must be >= 2, got {n_classes}")
    if dim < 1:
        raise ValidationError(f"dim must be >= 1, got {dim}")
    if per_class < 1:
        raise ValidationError(f"per_class must be >= 1, got {per_class}")
    if spread < 0:
        raise ValidationError(f"spread must be >= 0, got {spread}")
    if instances_per_class < 1:
        raise ValidationError(
            f"instances_per_class must be >= 1, got {instances_per_class}"
        )

    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, 1.0, size=(n_classes, dim))
    # Redraw on (practically impossible) coincident centres.
    while len({tuple(c) for c in centers}) < n_classes:
        centers = rng.normal(0.0, 1.0, size=(n_classes, dim))

    offsets = np.zeros((n_classes, instances_per_class, dim))
    if instances_per_class > 1:
        offsets = rng.normal(0.0, 0.5, size=(n_classes, instances_per_class, dim))

    dataset: List[Example] = []
    for c in range(n_classes):
        noise = rng.normal(0.0, 1.0, size=(per_class, dim)) * spread
        for k in range(per_class):
            instance = k % instances_per_class
            x = centers[c] + offsets[c, instance] + noise[k]
            dataset.append(
                Example(
                    x=x,
                    y=c,
                    index=len(dataset),
                    instance=c * instances_per_class + instance,
                )
            )
    logger.debug(
        "Synthetic dataset: %d classes x %d examples, dim=%d", n_classes, per_class, dim
    )
    return dataset


def _task_labels(kind: ScenarioKind, n_batches: int) -> List[int]:
    if kind is ScenarioKind.SIT:
        return [0] * n_batches
    if kind is ScenarioKind.MT:
        return list(range(n_batches))
    if n_batches < 3:
        raise ConfigurationError(
            f"MIT needs at least 3 batches to repeat a task while keeping two "
            f"distinct tasks, got n_batches={n_batches}"
        )
    return [i % 2 for i in range(n_batches)]


def _split_test(
    by_class: Dict[int, List[int]], test_fraction: float, rng: np.random.Generator
) -> Tuple[Dict[int, List[int]], List[int]]:
    train: Dict[int, List[int]] = {}
    test: List[int] = []
    for c, indices in by_class.items():
        shuffled = [indices[i] for i in rng.permutation(len(indices))]
        n_test = int(round(test_fraction * len(shuffled)))
        if n_test >= len(shuffled):
            raise ConfigurationError(
                f"test_fraction={test_fraction} leaves no training example for class {c}"
            )
        test.extend(shuffled[:n_test])
        train[c] = shuffled[n_test:]
    return train, sorted(test)


def _plan_nc(
    classes: List[int], train: Dict[int, List[int]], n_batches: int
) -> List[List[int]]:
    if n_batches > len(classes):
        raise ConfigurationError(
            f"NC needs n_batches <= n_classes, got n_batches={n_batches} "
            f"for {len(classes)} classes"
        )
    groups = np.array_split(np.array(classes), n_batches)
    return [[i for c in group for i in train[int(c)]] for group in groups]


def _plan_ni(
    classes: List[int],
    train: Dict[int, List[int]],
    n_batches: int,
) -> List[List[int]]:
    plan: List[List[int]] = [[] for _ in range(n_batches)]
    for c in classes:
        if len(train[c]) < n_batches:
            raise ConfigurationError(
                f"NI needs at least n_batches={n_batches} training examples per "
                f"class, class {c} has {len(train[c])}"
            )
        for b, part in enumerate(np.array_split(np.array(train[c]), n_batches)):
            plan[b].extend(int(i) for i in part)
    return plan


def _plan_nic(
    classes: List[int],
    train: Dict[int, List[int]],
    n_batches: int,
    rng: np.random.Generator,
) -> List[List[int]]:
    if n_batches == 1:
        return [[i for c in classes for i in train[c]]]

    n_first = math.ceil(len(classes) / 2)
    introduced = [list(classes[:n_first])]
    remaining = classes[n_first:]
    for group in np.array_split(np.array(remaining, dtype=np.int64), n_batches - 1):
        introduced.append([int(c) for c in group])

    # appearances[c] lists the batches in which class c contributes instances
    appearances: Dict[int, List[int]] = {}
    known: List[int] = []
    for b, new_classes in enumerate(introduced):
        if b > 0 and known:
            revisit = [known[i] for i in rng.permutation(len(known))[:2]]
            for c in revisit:
                appearances[c].append(b)
        for c in new_classes:
            appearances[c] = [b]
        known.extend(new_classes)

    plan: List[List[int]] = [[] for _ in range(n_batches)]
    for c in classes:
        parts = np.array_split(np.array(train[c]), len(appearances[c]))
        for b, part in zip(appearances[c], parts):
            plan[b].extend(int(i) for i in part)
    for b, indices in enumerate(plan):
        if not indices:
            raise ConfigurationError(
                f"NIC split leaves batch {b + 1} empty; use fewer batches "
                f"or more examples per class"
            )
    return plan


def build_scenario(
    dataset: Sequence[Example],
    kind: Union[ScenarioKind, str],
    content: Union[ContentKind, str],
    n_batches: int,
    seed: int,
    test_fraction: float = 0.2,
) -> Scenario:
    """Split a dataset into a test set and an ordered batch sequence.

    The result is a pure function of the arguments.
    """
    kind = ScenarioKind(kind)
    content = ContentKind(content)
    if not dataset:
        raise EmptyDatasetError("Cannot build a scenario from an empty dataset")
    if n_batches < 1:
        raise ConfigurationError(f"n_batches must be >= 1, got {n_batches}")
    if not 0.0 <= test_fraction < 1.0:
        raise ConfigurationError(f"test_fraction must be in [0, 1), got {test_fraction}")

    rng = np.random.default_rng(seed)
    labels = _task_labels(kind, n_batches)

    by_class: Dict[int, List[int]] = {}
    for pos, example in enumerate(dataset):
        by_class.setdefault(example.y, []).append(pos)
    classes = sorted(by_class)
    train, test_positions = _split_test(by_class, test_fraction, rng)

    if content is ContentKind.NC:
        plan = _plan_nc(classes, train, n_batches)
    elif content is ContentKind.NI:
        plan = _plan_ni(classes, train, n_batches)
    else:
        plan = _plan_nic(classes, train, n_batches, rng)

    batches = []
    for b, positions in enumerate(plan):
        order = rng.permutation(len(positions))
        examples = tuple(
            replace(dataset[positions[i]], t=labels[b]) for i in order
        )
        batches.append(TrainingBatch(index=b + 1, examples=examples, task_label=labels[b]))

    test_set = tuple(replace(dataset[p], t=None) for p in test_positions)
    n_classes = max(classes) + 1
    logger.debug(
        "Built %s/%s scenario: %d batches, %d test examples",
        kind.value,
        content.value,
        n_batches,
        len(test_set),
    )
    return Scenario(
        kind=kind,
        content=content,
        batches=tuple(batches),
        test_set=test_set,
        seed=seed,
        n_classes=n_classes,
    )


def check_task_structure(scenario: Scenario) -> TaskVerdict:
    """Check that the task-label sequence matches the scenario kind."""
    labels = scenario.task_labels
    if not labels:
        return TaskVerdict(False, "scenario has no batches")

    first_seen: Dict[Optional[int], int] = {}
    repeat: Optional[Tuple[int, int]] = None
    for pos, label in enumerate(labels, start=1):
        if label in first_seen and repeat is None:
            repeat = (first_seen[label], pos)
        first_seen.setdefault(label, pos)
    distinct = len(first_seen)

    if scenario.kind is ScenarioKind.SIT:
        if distinct == 1:
            return TaskVerdict(True)
        return TaskVerdict(False, f"SIT requires equal task labels, found {distinct} distinct")
    if scenario.kind is ScenarioKind.MT:
        if repeat is None:
            return TaskVerdict(True)
        return TaskVerdict(
            False, f"MT requires distinct task labels (repeat at positions {repeat[0]},{repeat[1]})"
        )
    if repeat is None:
        return TaskVerdict(False, "MIT requires at least one repeated task label")
    if distinct < 2:
        return TaskVerdict(False, "MIT requires at least two distinct task labels")
    return TaskVerdict(True)


def audit_memory_bound(trace: ResourceTrace, warmup: int = 0) -> BoundVerdict:
    """Check ``|M_i| < |Tr_1 ∪ .. ∪ Tr_i|`` for every step past the warmup.

    An empty memory never violates the bound.
    """
    if warmup < 0:
        raise ValidationError(f"warmup must be >= 0, got {warmup}")
    for rec in trace.records:
        if rec.step <= warmup:
            continue
        if rec.stored > 0 and rec.stored >= rec.seen:
            return BoundVerdict(False, rec.step)
    return BoundVerdict(True)


def _parse_float(cell: str, line: int, column: int) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DatasetParseError(
            f"non-numeric value {cell!r} in column {column}", line
        ) from None
    if not math.isfinite(value):
        raise DatasetParseError(f"non-finite value {cell!r} in column {column}", line)
    return value


def _is_numeric(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_csv_dataset(
    path: Union[str, Path],
    label_column: Union[int, str] = -1,
    has_header: bool = True,
) -> List[Example]:
    """Load one example per CSV row; every column but the label is a feature.

    Args:
        path: CSV file
        label_column: Column index (negative counts from the end) or header name
        has_header: Whether the first row names the columns

    Returns:
        Examples in file order

    Raises:
        ValidationError: If a declared header is all numbers, so it looks like data
        DatasetParseError: If a data row has a non-numeric cell or the wrong arity
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"Dataset file not found: {path}")

    with open(path, "r", encoding="utf-8", newline="") as f:
        rows = [(n, row) for n, row in enumerate(csv.reader(f), start=1) if row]

    if not rows:
        raise EmptyDatasetError(f"{path} contains no rows")

    header: Optional[List[str]] = None
    first_line, first_row = rows[0]
    if has_header:
        if all(_is_numeric(c) for c in first_row):
            raise ValidationError(
                f"{path}: first row is numeric but has_header is true; "
                "set has_header to false for a file without a header"
            )
        header = [c.strip() for c in first_row]
        rows = rows[1:]
    if not rows:
        raise EmptyDatasetError(f"{path} contains a header but no examples")

    arity = len(header) if header is not None else len(rows[0][1])
    if isinstance(label_column, str):
        if header is None or label_column not in header:
            raise ValidationError(f"Label column {label_column!r} not found in header")
        label_idx = header.index(label_column)
    else:
        label_idx = label_column if label_column >= 0 else arity + label_column
    if not 0 <= label_idx < arity:
        raise ValidationError(f"Label column {label_column} out of range for {arity} columns")
    if arity < 2:
        raise DatasetParseError("rows need at least one feature and a label", first_line)

    dataset: List[Example] = []
    for line, row in rows:
        if len(row) != arity:
            raise DatasetParseError(f"expected {arity} columns, found {len(row)}", line)
        label_value = _parse_float(row[label_idx], line, label_idx)
        if not label_value.is_integer() or label_value < 0:
            raise DatasetParseError(
                f"label {row[label_idx]!r} is not a non-negative integer", line
            )
        features = [
            _parse_float(cell, line, col)
            for col, cell in enumerate(row)
            if col != label_idx
        ]
        dataset.append(
            Example(x=np.array(features, dtype=np.float64), y=int(label_value), index=len(dataset))
        )

    logger.debug("Loaded %d examples from %s", len(dataset), path)
    return dataset
