"""Accuracy matrices, retention series and multi-seed aggregation."""

import hashlib
import json
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator

from ..exceptions import ValidationError
from .stream import Example, Scenario, stack_examples


class AccuracyMatrix(BaseModel):
    """``values[i][j]``: accuracy on the test split of batch ``j`` after training through ``i``.

    ``None`` marks undefined entries (upper triangle, empty partitions).
    """

    values: List[List[Optional[float]]]

    @field_validator("values")
    @classmethod
    def _check(cls, values: List[List[Optional[float]]]) -> List[List[Optional[float]]]:
        n = len(values)
        for i, row in enumerate(values):
            if len(row) != n:
                raise ValueError(f"row {i} has {len(row)} entries, expected {n}")
            for v in row:
                if v is not None and not 0.0 <= v <= 1.0:
                    raise ValueError(f"accuracy {v} outside [0, 1]")
        return values

    @property
    def n_batches(self) -> int:
        return len(self.values)

    @classmethod
    def from_array(cls, R: np.ndarray) -> "AccuracyMatrix":
        return cls(values=[[None if math.isnan(v) else float(v) for v in row] for row in np.asarray(R)])

    def to_array(self) -> np.ndarray:
        return np.array([[np.nan if v is None else v for v in row] for row in self.values], dtype=np.float64)


def empty_matrix(n: int) -> np.ndarray:
    return np.full((n, n), np.nan)


def test_partitions(scenario: Scenario) -> List[List[Example]]:
    """Test examples grouped by the batch in which their class first appears."""
    first_seen: Dict[int, int] = {}
    for i, batch in enumerate(scenario.batches):
        for c in batch.class_set:
            first_seen.setdefault(c, i)
    parts: List[List[Example]] = [[] for _ in scenario.batches]
    for example in scenario.test_set:
        if example.y in first_seen:
            parts[first_seen[example.y]].append(example)
    return parts


# Not a test function despite the name.
test_partitions.__test__ = False  # type: ignore[attr-defined]


def partition_arrays(parts: Sequence[Sequence[Example]]) -> List[Optional[Tuple[np.ndarray, np.ndarray]]]:
    return [stack_examples(p) if p else None for p in parts]


def accuracy(predictions: np.ndarray, targets: np.ndarray) -> float:
    predictions = np.asarray(predictions)
    targets = np.asarray(targets)
    if predictions.shape != targets.shape:
        raise ValidationError("predictions and targets differ in shape")
    if targets.size == 0:
        return float("nan")
    return float(np.mean(predictions == targets))


def average_accuracy(R: np.ndarray, i: int) -> float:
    """Mean of the defined entries ``R[i][0..i]``."""
    R = np.asarray(R, dtype=np.float64)
    if not 0 <= i < R.shape[0]:
        raise ValidationError(f"Row {i} outside a {R.shape[0]}-batch matrix")
    row = R[i, : i + 1]
    if np.all(np.isnan(row)):
        return float("nan")
    return float(np.nanmean(row))


def average_accuracy_series(R: np.ndarray) -> List[float]:
    return [average_accuracy(R, i) for i in range(np.asarray(R).shape[0])]


def first_task_retention(R: np.ndarray) -> List[float]:
    """Accuracy on the first batch's test partition after each training batch, ``R[:, 0]``."""
    R = np.asarray(R, dtype=np.float64)
    if R.shape[0] < 1:
        raise ValidationError("Accuracy matrix is empty")
    return [float(v) for v in R[:, 0]]


def aggregate_runs(matrices: Sequence[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    """Elementwise mean and population standard deviation across runs."""
    if not matrices:
        raise ValidationError("aggregate_runs needs at least one record")
    arrays = [np.asarray(m, dtype=np.float64) for m in matrices]
    shape = arrays[0].shape
    for a in arrays[1:]:
        if a.shape != shape:
            raise ValidationError(f"Shape mismatch: {a.shape} != {shape}")
    stacked = np.stack(arrays)
    defined = ~np.isnan(stacked)
    counts = defined.sum(axis=0)
    filled = np.where(defined, stacked, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = filled.sum(axis=0) / counts
        var = np.where(defined, (stacked - mean) ** 2, 0.0).sum(axis=0) / counts
    mean = np.where(counts > 0, mean, np.nan)
    std = np.where(counts > 0, np.sqrt(var), np.nan)
    return mean, std


def manifest_digest(manifest: Dict[str, Any]) -> str:
    payload = json.dumps(manifest, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class RunRecord(BaseModel):
    strategy: str
    seed: int
    manifest_digest: str
    manifest: Dict[str, Any]
    accuracy: AccuracyMatrix
    resource_trace: List[Dict[str, int]]
    wall_time: List[float] = Field(default_factory=list)
    extra: Dict[str, AccuracyMatrix] = Field(default_factory=dict)
    batch_reports: List[Dict[str, Any]] = Field(default_factory=list)
    memory_bound_ok: bool = True
    first_violation: Optional[int] = None

    @field_validator("resource_trace")
    @classmethod
    def _check_trace(cls, rows: List[Dict[str, int]]) -> List[Dict[str, int]]:
        for row in rows:
            missing = {"step", "stored", "seen"} - set(row)
            if missing:
                raise ValueError(f"resource trace row lacks {sorted(missing)}")
        return rows

    def matrix(self) -> np.ndarray:
        return self.accuracy.to_array()

    def deterministic_dict(self) -> Dict[str, Any]:
        """Everything except wall times."""
        return self.model_dump(mode="json", exclude={"wall_time"})
