"""Tests for accuracy matrices and multi-seed aggregation."""

import math

import numpy as np
import pytest

from ocl_bench.core.metrics import (
    AccuracyMatrix,
    RunRecord,
    accuracy,
    aggregate_runs,
    average_accuracy,
    average_accuracy_series,
    first_task_retention,
    manifest_digest,
    test_partitions,
)
from ocl_bench.exceptions import ValidationError

NAN = float("nan")


@pytest.fixture
def R():
    return np.array(
        [
            [0.9, NAN, NAN],
            [0.6, 0.8, NAN],
            [0.3, 0.5, 1.0],
        ]
    )


class TestAccuracy:
    def test_fraction_correct(self):
        assert accuracy(np.array([0, 1, 1, 2]), np.array([0, 1, 2, 2])) == 0.75

    def test_empty_is_undefined(self):
        assert math.isnan(accuracy(np.array([]), np.array([])))

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            accuracy(np.zeros(2), np.zeros(3))


class TestSeries:
    def test_average_accuracy(self, R):
        assert average_accuracy(R, 0) == pytest.approx(0.9)
        assert average_accuracy(R, 2) == pytest.approx(0.6)
        assert average_accuracy_series(R) == pytest.approx([0.9, 0.7, 0.6])

    def test_undefined_entries_are_skipped(self):
        R = np.array([[NAN, NAN], [0.4, NAN]])
        assert math.isnan(average_accuracy(R, 0))
        assert average_accuracy(R, 1) == pytest.approx(0.4)

    def test_row_out_of_range(self, R):
        with pytest.raises(ValidationError):
            average_accuracy(R, 3)

    def test_first_task_retention(self, R):
        assert first_task_retention(R) == pytest.approx([0.9, 0.6, 0.3])


class TestAggregate:
    def test_single_run_has_zero_std(self, R):
        mean, std = aggregate_runs([R])
        assert np.allclose(mean[2], R[2])
        assert np.allclose(std[2], 0.0)
        assert math.isnan(mean[0, 2])

    def test_population_std(self):
        mean, std = aggregate_runs([np.array([[0.2]]), np.array([[0.6]])])
        assert mean[0, 0] == pytest.approx(0.4)
        assert std[0, 0] == pytest.approx(0.2)

    def test_partially_defined_entries(self):
        mean, std = aggregate_runs([np.array([[NAN]]), np.array([[0.5]])])
        assert mean[0, 0] == pytest.approx(0.5)
        assert std[0, 0] == pytest.approx(0.0)

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            aggregate_runs([np.zeros((2, 2)), np.zeros((3, 3))])

    def test_needs_a_run(self):
        with pytest.raises(ValidationError):
            aggregate_runs([])


class TestPartitionsAndRecords:
    def test_partitions_follow_first_appearance(self, nc_scenario):
        parts = test_partitions(nc_scenario)
        for batch, part in zip(nc_scenario.batches, parts):
            assert {e.y for e in part} == set(batch.class_set)

    def test_matrix_validation(self):
        with pytest.raises(ValueError):
            AccuracyMatrix(values=[[0.5, None]])
        with pytest.raises(ValueError):
            AccuracyMatrix(values=[[1.5]])

    def test_record_round_trip_keeps_undefined_entries(self, R):
        record = RunRecord(
            strategy="naive",
            seed=0,
            manifest_digest=manifest_digest({"a": 1}),
            manifest={"a": 1},
            accuracy=AccuracyMatrix.from_array(R),
            resource_trace=[{"step": 1, "stored": 0, "seen": 10}],
            wall_time=[0.1],
        )
        restored = RunRecord.model_validate(record.model_dump(mode="json"))
        assert np.array_equal(restored.matrix(), R, equal_nan=True)
        assert "wall_time" not in restored.deterministic_dict()

    def test_digest_ignores_key_order(self):
        assert manifest_digest({"a": 1, "b": [1, 2]}) == manifest_digest({"b": [1, 2], "a": 1})
        assert manifest_digest({"a": 1}) != manifest_digest({"a": 2})
